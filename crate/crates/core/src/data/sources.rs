use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    load_delimited, load_idx, stratified_split, Dataset, DelimitedFormat, NormalizationScheme,
    Normalizer,
};
use crate::error::{Result, SalError};

/// Seed of the stratified 80/20 split for datasets without a canonical split.
pub const SPLIT_SEED: u64 = 20_240_917;
pub const SPLIT_TRAIN_FRACTION: f64 = 0.8;

/// Where a dataset file can be obtained, with the checksum of the file as
/// published there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceFile {
    pub name: &'static str,
    pub url: &'static str,
    pub md5: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Digits,
    Semeion,
    Usps,
    Mnist,
    FashionMnist,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 5] = [
        DatasetKind::Digits,
        DatasetKind::Semeion,
        DatasetKind::Usps,
        DatasetKind::Mnist,
        DatasetKind::FashionMnist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Digits => "digits",
            DatasetKind::Semeion => "semeion",
            DatasetKind::Usps => "usps",
            DatasetKind::Mnist => "mnist",
            DatasetKind::FashionMnist => "fashion-mnist",
        }
    }

    pub fn default_normalization(self) -> NormalizationScheme {
        match self {
            DatasetKind::Digits => NormalizationScheme::ZScore,
            _ => NormalizationScheme::Affine05,
        }
    }

    /// True when the published files already separate train and test.
    pub fn has_canonical_split(self) -> bool {
        matches!(
            self,
            DatasetKind::Usps | DatasetKind::Mnist | DatasetKind::FashionMnist
        )
    }

    /// File names looked up when a directory is given; train files first.
    pub fn file_names(self) -> &'static [&'static str] {
        match self {
            DatasetKind::Digits => &["digits.csv"],
            DatasetKind::Semeion => &["semeion.data"],
            DatasetKind::Usps => &["usps", "usps.t"],
            DatasetKind::Mnist | DatasetKind::FashionMnist => &[
                "train-images-idx3-ubyte",
                "train-labels-idx1-ubyte",
                "t10k-images-idx3-ubyte",
                "t10k-labels-idx1-ubyte",
            ],
        }
    }

    /// Directory under the data root used by default, e.g. `data/mnist`.
    pub fn default_location(self, data_root: &Path) -> PathBuf {
        match self {
            DatasetKind::Digits | DatasetKind::Semeion | DatasetKind::Usps => {
                data_root.to_path_buf()
            }
            DatasetKind::Mnist => data_root.join("mnist"),
            DatasetKind::FashionMnist => data_root.join("fashion-mnist"),
        }
    }

    pub fn sources(self) -> &'static [SourceFile] {
        const MNIST: &str = "https://ossci-datasets.s3.amazonaws.com/mnist/";
        const FASHION: &str = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/";
        match self {
            DatasetKind::Digits => &[SourceFile {
                name: "digits.csv",
                url: "scikit-learn: sklearn/datasets/data/digits.csv.gz (gunzip to digits.csv)",
                md5: "",
            }],
            DatasetKind::Semeion => &[SourceFile {
                name: "semeion.data",
                url: "http://archive.ics.uci.edu/ml/machine-learning-databases/semeion/semeion.data",
                md5: "cb545d371d2ce14ec121470795a77432",
            }],
            DatasetKind::Usps => &[
                SourceFile {
                    name: "usps.bz2",
                    url: "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass/usps.bz2",
                    md5: "ec16c51db3855ca6c91edd34d0e9b197",
                },
                SourceFile {
                    name: "usps.t.bz2",
                    url: "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass/usps.t.bz2",
                    md5: "8ea070ee2aca1ac39742fdd1ef5ed118",
                },
            ],
            DatasetKind::Mnist => &[
                SourceFile {
                    name: "train-images-idx3-ubyte.gz",
                    url: MNIST,
                    md5: "f68b3c2dcbeaaa9fbdd348bbdeb94873",
                },
                SourceFile {
                    name: "train-labels-idx1-ubyte.gz",
                    url: MNIST,
                    md5: "d53e105ee54ea40749a09fcbcd1e9432",
                },
                SourceFile {
                    name: "t10k-images-idx3-ubyte.gz",
                    url: MNIST,
                    md5: "9fb629c4189551a2d022fa330f9573f3",
                },
                SourceFile {
                    name: "t10k-labels-idx1-ubyte.gz",
                    url: MNIST,
                    md5: "ec29112dd5afa0611ce80d1b7f02629c",
                },
            ],
            DatasetKind::FashionMnist => &[
                SourceFile {
                    name: "train-images-idx3-ubyte.gz",
                    url: FASHION,
                    md5: "8d4fb7e6c68d591d4c3dfef9ec88bf0d",
                },
                SourceFile {
                    name: "train-labels-idx1-ubyte.gz",
                    url: FASHION,
                    md5: "25c81989df183df01b3e8a0aad5dffbe",
                },
                SourceFile {
                    name: "t10k-images-idx3-ubyte.gz",
                    url: FASHION,
                    md5: "bef4ecab320f06d8554ea6380940ec79",
                },
                SourceFile {
                    name: "t10k-labels-idx1-ubyte.gz",
                    url: FASHION,
                    md5: "bb300cfdad3c16e7a12a480ee83cd310",
                },
            ],
        }
    }

    /// Resolves `path` to the concrete files. A directory is searched for
    /// [`file_names`](Self::file_names); a file is taken as the first entry,
    /// with a USPS test file expected alongside as `<file>.t`.
    pub fn resolve(self, path: &Path) -> Result<Vec<PathBuf>> {
        let files: Vec<PathBuf> = if path.is_dir() {
            self.file_names().iter().map(|n| path.join(n)).collect()
        } else {
            match self {
                DatasetKind::Digits | DatasetKind::Semeion => vec![path.to_path_buf()],
                DatasetKind::Usps => {
                    let mut t = path.as_os_str().to_owned();
                    t.push(".t");
                    vec![path.to_path_buf(), PathBuf::from(t)]
                }
                DatasetKind::Mnist | DatasetKind::FashionMnist => {
                    return Err(SalError::Data(format!(
                        "{} expects a directory holding the four IDX files, got {}",
                        self.name(),
                        path.display()
                    )))
                }
            }
        };
        let missing: Vec<String> = files
            .iter()
            .filter(|f| !f.is_file())
            .map(|f| f.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(SalError::Data(format!(
                "missing {} file(s): {}",
                self.name(),
                missing.join(", ")
            )));
        }
        Ok(files)
    }

    /// Loads every sample without splitting or normalizing.
    pub fn load_raw(self, path: &Path) -> Result<Dataset> {
        let (train, test) = self.load_raw_parts(path)?;
        match test {
            Some(t) => train.concat(&t),
            None => Ok(train),
        }
    }

    fn load_raw_parts(self, path: &Path) -> Result<(Dataset, Option<Dataset>)> {
        let files = self.resolve(path)?;
        let named = |ds: Dataset| ds.renamed(self.name());
        Ok(match self {
            DatasetKind::Digits => (
                named(load_delimited(&files[0], DelimitedFormat::Digits)?),
                None,
            ),
            DatasetKind::Semeion => (
                named(load_delimited(&files[0], DelimitedFormat::Semeion)?),
                None,
            ),
            DatasetKind::Usps => (
                named(load_delimited(&files[0], DelimitedFormat::Usps)?),
                Some(named(load_delimited(&files[1], DelimitedFormat::Usps)?)),
            ),
            DatasetKind::Mnist | DatasetKind::FashionMnist => {
                let train = named(load_idx(&files[0], &files[1])?);
                let test = named(load_idx(&files[2], &files[3])?);
                let classes = train.class_count().max(test.class_count());
                (
                    train.with_class_count(classes)?,
                    Some(test.with_class_count(classes)?),
                )
            }
        })
    }

    /// Train and held-out splits, normalized with training statistics.
    pub fn load_splits(self, path: &Path) -> Result<(Dataset, Dataset)> {
        let (train, test) = match self.load_raw_parts(path)? {
            (train, Some(test)) => (train, test),
            (all, None) => stratified_split(&all, SPLIT_TRAIN_FRACTION, SPLIT_SEED)?,
        };
        let norm = Normalizer::fit(&train, self.default_normalization())?;
        Ok((norm.apply(&train)?, norm.apply(&test)?))
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase().replace('_', "-");
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.name() == lower || (lower == "fashion" && *k == DatasetKind::FashionMnist))
            .ok_or_else(|| {
                let names: Vec<&str> = DatasetKind::ALL.iter().map(|k| k.name()).collect();
                format!(
                    "unknown dataset `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}
