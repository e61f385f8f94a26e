//! Exhaustive lattice enumeration.

use std::collections::BTreeMap;

use super::SamplerError;
use crate::space::{Domain, ParamSpec, ParamValue, Params, SearchSpace};

fn linspace(low: f64, high: f64, n: u32) -> Vec<f64> {
    if n == 1 {
        return vec![low];
    }
    let step = (high - low) / f64::from(n - 1);
    (0..n).map(|i| if i == n - 1 { high } else { low + f64::from(i) * step }).collect()
}

/// The values one parameter takes on the lattice.
pub fn axis(spec: &ParamSpec, points: Option<u32>) -> Result<Vec<ParamValue>, SamplerError> {
    let missing = || SamplerError::GridMissing(spec.name.clone());
    Ok(match &spec.domain {
        Domain::Uniform { low, high } => {
            linspace(*low, *high, points.ok_or_else(missing)?).into_iter().map(ParamValue::Real).collect()
        }
        Domain::LogUniform { low, high } => linspace(low.ln(), high.ln(), points.ok_or_else(missing)?)
            .into_iter()
            .map(|z| ParamValue::Real(z.exp().clamp(*low, *high)))
            .collect(),
        Domain::Integer { low, high } => match points {
            None => (*low..=*high).map(ParamValue::Int).collect(),
            Some(n) => {
                let mut ints: Vec<i64> =
                    linspace(*low as f64, *high as f64, n).into_iter().map(|v| v.round() as i64).collect();
                ints.dedup();
                ints.into_iter().map(ParamValue::Int).collect()
            }
        },
        Domain::Categorical { choices } => choices.iter().cloned().map(ParamValue::Choice).collect(),
    })
}

/// Checks that every numeric parameter that needs a point count has one and
/// that no count names an unknown parameter.
pub fn check_grid(space: &SearchSpace, grid_points: &BTreeMap<String, u32>) -> Result<(), SamplerError> {
    if let Some(name) = grid_points.keys().find(|name| space.get(name).is_none()) {
        return Err(SamplerError::GridUnknown(name.clone()));
    }
    for spec in space.params() {
        axis(spec, grid_points.get(&spec.name).copied())?;
    }
    Ok(())
}

pub fn lattice_size(space: &SearchSpace, grid_points: &BTreeMap<String, u32>) -> Result<u128, SamplerError> {
    space.sorted().into_iter().try_fold(1u128, |acc, spec| {
        Ok(acc.saturating_mul(axis(spec, grid_points.get(&spec.name).copied())?.len() as u128))
    })
}

/// Lattice point number `n_taken`, in row-major order over parameter names
/// sorted lexicographically (the first name varies slowest). `None` once the
/// lattice is exhausted.
pub fn grid_next(
    space: &SearchSpace,
    n_taken: u64,
    grid_points: &BTreeMap<String, u32>,
) -> Result<Option<Params>, SamplerError> {
    let axes: Vec<(&ParamSpec, Vec<ParamValue>)> = space
        .sorted()
        .into_iter()
        .map(|spec| Ok((spec, axis(spec, grid_points.get(&spec.name).copied())?)))
        .collect::<Result<_, SamplerError>>()?;
    let size = axes.iter().fold(1u128, |acc, (_, a)| acc.saturating_mul(a.len() as u128));
    if u128::from(n_taken) >= size {
        return Ok(None);
    }
    let mut rest = u128::from(n_taken);
    let mut params = Params::new();
    for (spec, values) in axes.iter().rev() {
        let len = values.len() as u128;
        params.insert(spec.name.clone(), values[(rest % len) as usize].clone());
        rest /= len;
    }
    Ok(Some(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn points(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn midpoint_of_three() {
        let space = SearchSpace::new(vec![ParamSpec::uniform("x", 0.0, 1.0)]);
        let p = grid_next(&space, 1, &points(&[("x", 3)])).unwrap().unwrap();
        assert_eq!(p["x"], ParamValue::Real(0.5));
    }

    #[test]
    fn row_major_over_sorted_names() {
        let space = SearchSpace::new(vec![
            ParamSpec::uniform("x", 0.0, 1.0),
            ParamSpec::categorical("c", ["a", "b"]),
        ]);
        let p = grid_next(&space, 3, &points(&[("x", 2)])).unwrap().unwrap();
        assert_eq!(p["c"], ParamValue::Choice("b".into()));
        assert_eq!(p["x"], ParamValue::Real(1.0));
        let first = grid_next(&space, 1, &points(&[("x", 2)])).unwrap().unwrap();
        assert_eq!(first["c"], ParamValue::Choice("a".into()));
        assert_eq!(first["x"], ParamValue::Real(1.0));
    }

    #[test]
    fn exhausted_at_lattice_size() {
        let space = SearchSpace::new(vec![
            ParamSpec::uniform("x", 0.0, 1.0),
            ParamSpec::categorical("c", ["a", "b", "c"]),
        ]);
        let g = points(&[("x", 2)]);
        assert_eq!(lattice_size(&space, &g).unwrap(), 6);
        assert!(grid_next(&space, 5, &g).unwrap().is_some());
        assert_eq!(grid_next(&space, 6, &g).unwrap(), None);
    }

    #[test]
    fn every_point_exactly_once() {
        let space = SearchSpace::new(vec![
            ParamSpec::uniform("a", -1.0, 1.0),
            ParamSpec::integer("n", 1, 4),
            ParamSpec::log_uniform("lr", 1e-4, 1e-1),
            ParamSpec::categorical("c", ["p", "q"]),
        ]);
        let g = points(&[("a", 3), ("lr", 4)]);
        let size = lattice_size(&space, &g).unwrap() as u64;
        assert_eq!(size, 3 * 4 * 4 * 2);
        let seen: HashSet<String> = (0..size)
            .map(|i| {
                let p = grid_next(&space, i, &g).unwrap().unwrap();
                assert!(space.conforms(&p));
                serde_json::to_string(&p).unwrap()
            })
            .collect();
        assert_eq!(seen.len() as u64, size);
    }

    #[test]
    fn continuous_axes_need_point_counts() {
        let space = SearchSpace::new(vec![ParamSpec::uniform("x", 0.0, 1.0)]);
        assert_eq!(check_grid(&space, &BTreeMap::new()), Err(SamplerError::GridMissing("x".into())));
        assert_eq!(
            check_grid(&space, &points(&[("x", 2), ("y", 2)])),
            Err(SamplerError::GridUnknown("y".into()))
        );
    }
}
