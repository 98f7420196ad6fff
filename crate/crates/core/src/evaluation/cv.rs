use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::curve::{auc, CurvePoint};
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Folds {
    K(usize),
    LeaveOneMovieOut,
}

impl FromStr for Folds {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("loo") {
            return Ok(Folds::LeaveOneMovieOut);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 2 => Ok(Folds::K(k)),
            _ => Err(Error::Config(format!("folds must be an integer >= 2 or 'loo', got '{s}'"))),
        }
    }
}

/// Splits movies into test groups; no movie appears in two groups. Movies are
/// shuffled with `seed` and dealt round-robin.
pub fn fold_assignment(movies: &[String], folds: Folds, seed: u64) -> Result<Vec<Vec<String>>> {
    let mut sorted = movies.to_vec();
    sorted.sort();
    sorted.dedup();
    let k = match folds {
        Folds::K(k) => k,
        Folds::LeaveOneMovieOut => sorted.len(),
    };
    if k < 2 || sorted.len() < k {
        return Err(Error::TooFewMovies { movies: sorted.len(), folds: k });
    }
    if folds == Folds::LeaveOneMovieOut {
        return Ok(sorted.into_iter().map(|m| vec![m]).collect());
    }
    sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); k];
    for (i, m) in sorted.into_iter().enumerate() {
        out[i % k].push(m);
    }
    for f in &mut out {
        f.sort();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub test_movies: Vec<Vec<String>>,
    /// Precision-recall curve of each fold's test movies.
    pub fold_curves: Vec<Vec<CurvePoint>>,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
}

/// Runs `evaluate(train_movies, test_movies)` for every fold, in parallel,
/// and scores each returned curve by its AUC.
pub fn cross_validate<F>(movies: &[String], folds: Folds, seed: u64, evaluate: F) -> Result<CvResult>
where
    F: Fn(&[String], &[String]) -> Result<Vec<CurvePoint>> + Sync,
{
    let groups = fold_assignment(movies, folds, seed)?;
    let fold_curves = groups
        .par_iter()
        .map(|test| {
            let train: Vec<String> = movies.iter().filter(|m| !test.contains(m)).cloned().collect();
            evaluate(&train, test)
        })
        .collect::<Result<Vec<_>>>()?;
    let fold_aucs = fold_curves.iter().map(|c| auc(c)).collect::<Result<Vec<f64>>>()?;
    let mean_auc = fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64;
    Ok(CvResult { test_movies: groups, fold_curves, fold_aucs, mean_auc })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn movies(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i:02}")).collect()
    }

    #[test]
    fn five_movies_five_folds() {
        let f = fold_assignment(&movies(5), Folds::K(5), 1).unwrap();
        assert_eq!(f.len(), 5);
        assert!(f.iter().all(|g| g.len() == 1));
        let mut all: Vec<String> = f.into_iter().flatten().collect();
        all.sort();
        assert_eq!(all, movies(5));
    }

    #[test]
    fn reproducible_and_disjoint() {
        let a = fold_assignment(&movies(12), Folds::K(5), 42).unwrap();
        assert_eq!(a, fold_assignment(&movies(12), Folds::K(5), 42).unwrap());
        let total: usize = a.iter().map(|g| g.len()).sum();
        assert_eq!(total, 12);
        for (i, g) in a.iter().enumerate() {
            for h in &a[i + 1..] {
                assert!(g.iter().all(|m| !h.contains(m)));
            }
        }
    }

    #[test]
    fn too_few_movies() {
        assert!(matches!(fold_assignment(&movies(3), Folds::K(5), 0), Err(Error::TooFewMovies { movies: 3, folds: 5 })));
        assert_eq!(fold_assignment(&movies(4), Folds::LeaveOneMovieOut, 0).unwrap().len(), 4);
    }

    #[test]
    fn mean_is_average_of_folds() {
        let r = cross_validate(&movies(6), Folds::K(3), 7, |train, test| {
            assert!(test.iter().all(|m| !train.contains(m)));
            let p = (test[0].as_bytes()[2] - b'0') as f64 / 10.0;
            Ok(vec![CurvePoint { threshold: 1.0, recall: 1.0, precision: p }])
        })
        .unwrap();
        let mean = r.fold_aucs.iter().sum::<f64>() / 3.0;
        assert_eq!(r.mean_auc, mean);
        assert!(r.fold_aucs.iter().any(|a| *a != r.fold_aucs[0]));
        assert_eq!(r.fold_aucs.len(), 3);
    }

    #[test]
    fn parse_folds() {
        assert_eq!("loo".parse::<Folds>().unwrap(), Folds::LeaveOneMovieOut);
        assert_eq!("5".parse::<Folds>().unwrap(), Folds::K(5));
        assert!("1".parse::<Folds>().is_err());
    }
}
