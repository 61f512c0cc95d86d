//! Interaction files, k-core filtering and per-user train/validation/test splits.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw id ↔ dense index map. Indices follow first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate id `{id}` in vocabulary")));
            }
        }
        Ok(Vocab { ids, index })
    }

    pub fn intern(&mut self, raw: &str) -> usize {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(raw.to_string());
        self.index.insert(raw.to_string(), i);
        i
    }

    pub fn get(&self, raw: &str) -> Option<usize> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Implicit-feedback interactions: every observed (user, item) pair is a positive.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub users: Vocab,
    pub items: Vocab,
    /// Sorted, duplicate-free item indices per user.
    pub positives: Vec<Vec<usize>>,
}

impl InteractionDataset {
    /// Builds a dataset from dense pairs, dropping duplicates.
    pub fn from_pairs(users: Vocab, items: Vocab, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut positives = vec![Vec::new(); users.len()];
        for (u, i) in pairs {
            positives[u].push(i);
        }
        for list in &mut positives {
            list.sort_unstable();
            list.dedup();
        }
        InteractionDataset { users, items, positives }
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn interaction_count(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.item_count()];
        for list in &self.positives {
            for &i in list {
                deg[i] += 1;
            }
        }
        deg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFormat {
    /// `user::item::rating::timestamp`
    MovielensDat,
    /// `user,item[,rating[,timestamp]]`
    Csv,
    /// `user<TAB>item[...]`
    Tsv,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "movielens" | "movielens_dat" | "dat" => Ok(InputFormat::MovielensDat),
            "csv" => Ok(InputFormat::Csv),
            "tsv" => Ok(InputFormat::Tsv),
            _ => Err(Error::Config(format!("unknown input format `{s}`"))),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::MovielensDat => "movielens",
            InputFormat::Csv => "csv",
            InputFormat::Tsv => "tsv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOptions {
    pub delimiter: String,
    pub user_column: usize,
    pub item_column: usize,
    /// Skip the first non-empty line.
    pub has_header: bool,
}

impl From<InputFormat> for ParseOptions {
    fn from(format: InputFormat) -> Self {
        let delimiter = match format {
            InputFormat::MovielensDat => "::",
            InputFormat::Csv => ",",
            InputFormat::Tsv => "\t",
        };
        ParseOptions {
            delimiter: delimiter.to_string(),
            user_column: 0,
            item_column: 1,
            has_header: false,
        }
    }
}

/// Parses an interaction file. Ratings, timestamps and any other columns
/// are ignored; duplicate pairs collapse to one interaction.
pub fn parse_interactions(path: &Path, options: &ParseOptions) -> Result<InteractionDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(BufReader::new(file), path, options)
}

pub fn parse_reader(reader: impl BufRead, path: &Path, options: &ParseOptions) -> Result<InteractionDataset> {
    if options.delimiter.is_empty() {
        return Err(Error::Config("delimiter must not be empty".into()));
    }
    let mut users = Vocab::new();
    let mut items = Vocab::new();
    let mut pairs = Vec::new();
    let mut header_pending = options.has_header;
    let needed = options.user_column.max(options.item_column) + 1;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields: Vec<&str> = line.split(options.delimiter.as_str()).collect();
        let malformed = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason,
        };
        if fields.len() < needed {
            return Err(malformed(format!(
                "expected at least {needed} `{}`-separated fields, found {}",
                options.delimiter.escape_default(),
                fields.len()
            )));
        }
        let user = fields[options.user_column].trim();
        let item = fields[options.item_column].trim();
        if user.is_empty() || item.is_empty() {
            return Err(malformed("empty user or item id".into()));
        }
        pairs.push((users.intern(user), items.intern(item)));
    }
    if pairs.is_empty() {
        return Err(Error::Data(format!("{}: no interactions found", path.display())));
    }
    Ok(InteractionDataset::from_pairs(users, items, pairs))
}

/// Repeatedly drops users with fewer than `k_user` and items with fewer than
/// `k_item` interactions until every survivor meets both thresholds, then
/// re-densifies the indices (preserving relative order).
pub fn k_core_filter(dataset: &InteractionDataset, k_user: usize, k_item: usize) -> Result<InteractionDataset> {
    if k_user == 0 || k_item == 0 {
        return Err(Error::Config("k-core thresholds must be at least 1".into()));
    }
    let mut user_alive = vec![true; dataset.user_count()];
    let mut item_alive = vec![true; dataset.item_count()];
    loop {
        let mut changed = false;
        let mut item_deg = vec![0usize; dataset.item_count()];
        for (u, list) in dataset.positives.iter().enumerate() {
            if !user_alive[u] {
                continue;
            }
            let deg = list.iter().filter(|&&i| item_alive[i]).count();
            if deg < k_user {
                user_alive[u] = false;
                changed = true;
                continue;
            }
            for &i in list {
                if item_alive[i] {
                    item_deg[i] += 1;
                }
            }
        }
        for (i, alive) in item_alive.iter_mut().enumerate() {
            if *alive && item_deg[i] < k_item {
                *alive = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut users = Vocab::new();
    let mut items = Vocab::new();
    let mut item_map = vec![usize::MAX; dataset.item_count()];
    for (i, _) in item_alive.iter().enumerate().filter(|(_, a)| **a) {
        item_map[i] = items.intern(dataset.items.raw(i));
    }
    let mut pairs = Vec::new();
    for (u, list) in dataset.positives.iter().enumerate() {
        if !user_alive[u] {
            continue;
        }
        let nu = users.intern(dataset.users.raw(u));
        pairs.extend(list.iter().filter(|&&i| item_alive[i]).map(|&i| (nu, item_map[i])));
    }
    if pairs.is_empty() {
        return Err(Error::Data(format!(
            "{k_user}/{k_item}-core filtering removed every interaction"
        )));
    }
    Ok(InteractionDataset::from_pairs(users, items, pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

impl SplitPart {
    pub fn name(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Validation => "valid",
            SplitPart::Test => "test",
        }
    }
}

impl FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(SplitPart::Train),
            "valid" | "validation" => Ok(SplitPart::Validation),
            "test" => Ok(SplitPart::Test),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

/// Per-user partition of a dataset into train, validation and test items.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub users: Arc<Vocab>,
    pub items: Arc<Vocab>,
    pub train: Vec<Vec<usize>>,
    pub validation: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitDataset {
    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn part(&self, part: SplitPart) -> &[Vec<usize>] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Validation => &self.validation,
            SplitPart::Test => &self.test,
        }
    }

    /// The training part as a standalone dataset.
    pub fn train_dataset(&self) -> InteractionDataset {
        InteractionDataset {
            users: (*self.users).clone(),
            items: (*self.items).clone(),
            positives: self.train.clone(),
        }
    }
}

/// Shuffles each user's items with a seeded RNG and cuts at
/// `round(r_train·n)` and `round((r_train + r_valid)·n)`. Users with fewer
/// than three items keep one training item and put the rest in test.
pub fn split_per_user(dataset: &InteractionDataset, ratios: [f64; 3], seed: u64) -> Result<SplitDataset> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = dataset.user_count();
    let (mut train, mut validation, mut test) = (Vec::with_capacity(users), Vec::with_capacity(users), Vec::with_capacity(users));
    for list in &dataset.positives {
        let mut items = list.clone();
        items.shuffle(&mut rng);
        let n = items.len();
        let (c1, c2) = if n < 3 {
            (n.min(1), n.min(1))
        } else {
            let c1 = ((ratios[0] * n as f64).round() as usize).clamp(1, n);
            let c2 = (((ratios[0] + ratios[1]) * n as f64).round() as usize).clamp(c1, n);
            (c1, c2)
        };
        let mut parts = [items[..c1].to_vec(), items[c1..c2].to_vec(), items[c2..].to_vec()];
        for p in &mut parts {
            p.sort_unstable();
        }
        let [a, b, c] = parts;
        train.push(a);
        validation.push(b);
        test.push(c);
    }
    Ok(SplitDataset {
        users: Arc::new(dataset.users.clone()),
        items: Arc::new(dataset.items.clone()),
        train,
        validation,
        test,
        ratios,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    /// `1 − interactions / (users · items)`.
    pub sparsity: f64,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "users={} items={} interactions={} sparsity={:.2}%",
            self.users,
            self.items,
            self.interactions,
            self.sparsity * 100.0
        )
    }
}

pub fn dataset_stats(dataset: &InteractionDataset) -> Result<DatasetStats> {
    let users = dataset.user_count();
    let items = dataset.item_count();
    let interactions = dataset.interaction_count();
    if users == 0 || items == 0 {
        return Err(Error::Data("statistics of an empty dataset".into()));
    }
    Ok(DatasetStats {
        users,
        items,
        interactions,
        sparsity: 1.0 - interactions as f64 / (users as f64 * items as f64),
    })
}

pub const TRAIN_FILE: &str = "train.txt";
pub const VALID_FILE: &str = "valid.txt";
pub const TEST_FILE: &str = "test.txt";
pub const USER_VOCAB_FILE: &str = "user_vocab.txt";
pub const ITEM_VOCAB_FILE: &str = "item_vocab.txt";
pub const SPLIT_META_FILE: &str = "split_meta.txt";

fn write_lines(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes `train.txt`, `valid.txt`, `test.txt` (tab-separated dense
/// `user item` pairs), the two vocab files (raw id per line, line number =
/// index) and a one-line split description.
pub fn write_split(split: &SplitDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, part) in [(TRAIN_FILE, &split.train), (VALID_FILE, &split.validation), (TEST_FILE, &split.test)] {
        write_lines(&dir.join(name), |w| {
            for (u, list) in part.iter().enumerate() {
                for i in list {
                    writeln!(w, "{u}\t{i}")?;
                }
            }
            Ok(())
        })?;
    }
    for (name, vocab) in [(USER_VOCAB_FILE, &split.users), (ITEM_VOCAB_FILE, &split.items)] {
        write_lines(&dir.join(name), |w| {
            for id in vocab.ids() {
                writeln!(w, "{id}")?;
            }
            Ok(())
        })?;
    }
    write_lines(&dir.join(SPLIT_META_FILE), |w| {
        writeln!(
            w,
            "ratios={:?},{:?},{:?} seed={}",
            split.ratios[0], split.ratios[1], split.ratios[2], split.seed
        )
    })
}

fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocab::from_ids(text.lines().map(str::to_string).collect())
}

fn read_pairs(path: &Path, users: usize, items: usize) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lists = vec![Vec::new(); users];
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason: reason.to_string(),
        };
        let (u, i) = line.split_once('\t').ok_or_else(|| bad("expected `user<TAB>item`"))?;
        let u: usize = u.parse().map_err(|_| bad("user index is not an integer"))?;
        let i: usize = i.parse().map_err(|_| bad("item index is not an integer"))?;
        if u >= users || i >= items {
            return Err(bad("index outside the vocabulary"));
        }
        lists[u].push(i);
    }
    for list in &mut lists {
        list.sort_unstable();
        list.dedup();
    }
    Ok(lists)
}

pub fn read_split(dir: &Path) -> Result<SplitDataset> {
    let users = read_vocab(&dir.join(USER_VOCAB_FILE))?;
    let items = read_vocab(&dir.join(ITEM_VOCAB_FILE))?;
    let train = read_pairs(&dir.join(TRAIN_FILE), users.len(), items.len())?;
    let validation = read_pairs(&dir.join(VALID_FILE), users.len(), items.len())?;
    let test = read_pairs(&dir.join(TEST_FILE), users.len(), items.len())?;

    let meta_path = dir.join(SPLIT_META_FILE);
    let (mut ratios, mut seed) = ([0.7, 0.1, 0.2], 0);
    if let Ok(meta) = fs::read_to_string(&meta_path) {
        for tok in meta.split_whitespace() {
            match tok.split_once('=') {
                Some(("ratios", v)) => {
                    let parsed: Vec<f64> = v.split(',').filter_map(|x| x.parse().ok()).collect();
                    if parsed.len() == 3 {
                        ratios = [parsed[0], parsed[1], parsed[2]];
                    }
                }
                Some(("seed", v)) => seed = v.parse().unwrap_or(0),
                _ => {}
            }
        }
    }
    Ok(SplitDataset {
        users: Arc::new(users),
        items: Arc::new(items),
        train,
        validation,
        test,
        ratios,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse_str(text: &str, format: InputFormat) -> Result<InteractionDataset> {
        parse_reader(Cursor::new(text), Path::new("mem"), &format.into())
    }

    #[test]
    fn movielens_lines() {
        let ds = parse_str("u1::i1::5::100\nu1::i2::3::101\nu2::i1::4::102\n", InputFormat::MovielensDat).unwrap();
        assert_eq!((ds.user_count(), ds.item_count(), ds.interaction_count()), (2, 2, 3));
        assert_eq!(ds.users.raw(0), "u1");
        assert_eq!(ds.items.get("i2"), Some(1));
    }

    #[test]
    fn duplicates_collapse() {
        let ds = parse_str("u1,i1,5\nu1,i1,3\n", InputFormat::Csv).unwrap();
        assert_eq!(ds.interaction_count(), 1);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = parse_str("a\tb\n\nbroken\n", InputFormat::Tsv).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(parse_str("\n\n", InputFormat::Tsv), Err(Error::Data(_))));
    }

    #[test]
    fn header_and_custom_columns() {
        let opts = ParseOptions {
            delimiter: "\t".into(),
            user_column: 1,
            item_column: 0,
            has_header: true,
        };
        let ds = parse_reader(Cursor::new("item\tuser\nA\tx\nB\tx\n"), Path::new("mem"), &opts).unwrap();
        assert_eq!(ds.user_count(), 1);
        assert_eq!(ds.positives[0], vec![0, 1]);
    }

    #[test]
    fn k_core_fixed_point_unchanged() {
        let ds = parse_str("a,1\na,2\nb,1\nb,2\n", InputFormat::Csv).unwrap();
        let out = k_core_filter(&ds, 2, 2).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn k_core_chain_collapses() {
        // u1–i1, u1–i2, u2–i2 with k=2: u2 and i1 go first, then everything.
        let ds = parse_str("u1,i1\nu1,i2\nu2,i2\n", InputFormat::Csv).unwrap();
        assert!(matches!(k_core_filter(&ds, 2, 2), Err(Error::Data(_))));
    }

    #[test]
    fn split_exact_ratios() {
        let users = Vocab::from_ids(vec!["u".into()]).unwrap();
        let items = Vocab::from_ids((0..10).map(|i| i.to_string()).collect()).unwrap();
        let ds = InteractionDataset::from_pairs(users, items, (0..10).map(|i| (0, i)));
        let split = split_per_user(&ds, [0.7, 0.1, 0.2], 1).unwrap();
        assert_eq!((split.train[0].len(), split.validation[0].len(), split.test[0].len()), (7, 1, 2));
    }

    #[test]
    fn split_minimum_train_rule() {
        let users = Vocab::from_ids(vec!["a".into(), "b".into()]).unwrap();
        let items = Vocab::from_ids(vec!["x".into(), "y".into()]).unwrap();
        let ds = InteractionDataset::from_pairs(users, items, [(0, 0), (0, 1), (1, 1)]);
        let split = split_per_user(&ds, [0.7, 0.1, 0.2], 5).unwrap();
        assert_eq!((split.train[0].len(), split.validation[0].len(), split.test[0].len()), (1, 0, 1));
        assert_eq!((split.train[1].len(), split.validation[1].len(), split.test[1].len()), (1, 0, 0));
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let ds = parse_str("a,1\n", InputFormat::Csv).unwrap();
        assert!(split_per_user(&ds, [0.7, 0.2, 0.2], 0).is_err());
        assert!(split_per_user(&ds, [0.9, 0.1, 0.0], 0).is_err());
    }

    #[test]
    fn stats_two_by_two() {
        let ds = parse_str("a,1\nb,2\n", InputFormat::Csv).unwrap();
        let stats = dataset_stats(&ds).unwrap();
        assert_eq!(stats.sparsity, 0.5);
        assert_eq!(stats.to_string(), "users=2 items=2 interactions=2 sparsity=50.00%");
    }

    #[test]
    fn split_files_round_trip() {
        let ds = parse_str("a,1\na,2\na,3\nb,2\nb,4\nc,1\na,4\nb,1\n", InputFormat::Csv).unwrap();
        let split = split_per_user(&ds, [0.7, 0.1, 0.2], 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_split(&split, dir.path()).unwrap();
        let back = read_split(dir.path()).unwrap();
        assert_eq!(back, split);
    }
}
