use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{rating_to_class, Interaction, MovieMeta, NO_GENRES};
use crate::error::{Error, Result};

/// Dense id → original id (or name) tables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IdMaps {
    pub users: Vec<u64>,
    pub movies: Vec<u64>,
    pub genres: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub interactions: Vec<Interaction>,
    /// Indexed by dense movie id.
    pub movies: Vec<MovieMeta>,
    pub maps: IdMaps,
}

impl Corpus {
    pub fn num_users(&self) -> usize {
        self.maps.users.len()
    }

    pub fn num_movies(&self) -> usize {
        self.movies.len()
    }

    pub fn num_genres(&self) -> usize {
        self.maps.genres.len()
    }
}

struct RawMovie {
    genres: Vec<String>,
    release_year: Option<i32>,
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, what: &str, source: &str) -> Result<&'r str> {
    record
        .get(idx)
        .map(str::trim)
        .ok_or_else(|| Error::data(format!("{source} line {}: missing {what} column", line_of(record))))
}

fn parse<T: std::str::FromStr>(text: &str, what: &str, source: &str, line: u64) -> Result<T> {
    text.parse()
        .map_err(|_| Error::data(format!("{source} line {line}: invalid {what} {text:?}")))
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn read_movies<R: Read>(movies: R) -> Result<BTreeMap<u64, RawMovie>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(movies);
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("movies header: {e}")))?
        .clone();
    let id_col = column(&headers, "movieId").ok_or_else(|| Error::data("movies header lacks movieId"))?;
    let genre_col = column(&headers, "genres").ok_or_else(|| Error::data("movies header lacks genres"))?;
    let year_col = column(&headers, "releaseYear");
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(format!("movies: {e}")))?;
        let line = line_of(&record);
        let id: u64 = parse(field(&record, id_col, "movieId", "movies")?, "movieId", "movies", line)?;
        let genres_text = field(&record, genre_col, "genres", "movies")?;
        let mut genres: Vec<String> = genres_text
            .split('|')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(String::from)
            .collect();
        if genres.is_empty() {
            genres.push(NO_GENRES.to_string());
        }
        let release_year = match year_col.and_then(|c| record.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(y) => Some(parse(y, "releaseYear", "movies", line)?),
        };
        if out.insert(id, RawMovie { genres, release_year }).is_some() {
            return Err(Error::data(format!("movies line {line}: duplicate movieId {id}")));
        }
    }
    Ok(out)
}

/// Reads MovieLens `ratings.csv` and `movies.csv` (optionally with a
/// `releaseYear` column) and remaps ids densely: users and rated movies in
/// ascending original-id order, genres by name.
pub fn load_interactions<R1: Read, R2: Read>(ratings: R1, movies: R2) -> Result<Corpus> {
    let raw_movies = read_movies(movies)?;

    let mut reader = csv::ReaderBuilder::new().from_reader(ratings);
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("ratings header: {e}")))?
        .clone();
    let cols: Vec<usize> = ["userId", "movieId", "rating", "timestamp"]
        .iter()
        .map(|c| column(&headers, c).ok_or_else(|| Error::data(format!("ratings header lacks {c}"))))
        .collect::<Result<_>>()?;

    let mut raw = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(format!("ratings: {e}")))?;
        let line = line_of(&record);
        let user: u64 = parse(field(&record, cols[0], "userId", "ratings")?, "userId", "ratings", line)?;
        let movie: u64 = parse(
            field(&record, cols[1], "movieId", "ratings")?,
            "movieId",
            "ratings",
            line,
        )?;
        let rating: f64 = parse(field(&record, cols[2], "rating", "ratings")?, "rating", "ratings", line)?;
        let timestamp: i64 = parse(
            field(&record, cols[3], "timestamp", "ratings")?,
            "timestamp",
            "ratings",
            line,
        )?;
        if rating_to_class(rating).is_none() {
            return Err(Error::data(format!(
                "ratings line {line}: rating {rating} is not on the 0.5..5.0 grid"
            )));
        }
        if timestamp < 0 {
            return Err(Error::data(format!("ratings line {line}: negative timestamp")));
        }
        if !raw_movies.contains_key(&movie) {
            return Err(Error::data(format!("ratings line {line}: unknown movie {movie}")));
        }
        raw.push((user, movie, rating, timestamp));
    }

    let users: Vec<u64> = raw.iter().map(|r| r.0).collect::<BTreeSet<_>>().into_iter().collect();
    let movies: Vec<u64> = raw.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
    let genres: Vec<String> = movies
        .iter()
        .flat_map(|m| raw_movies[m].genres.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let user_idx: HashMap<u64, u32> = users.iter().enumerate().map(|(i, &u)| (u, i as u32)).collect();
    let movie_idx: HashMap<u64, u32> = movies.iter().enumerate().map(|(i, &m)| (m, i as u32)).collect();
    let genre_idx: HashMap<&str, u32> = genres.iter().enumerate().map(|(i, g)| (g.as_str(), i as u32)).collect();

    let interactions = raw
        .into_iter()
        .map(|(u, m, rating, timestamp)| Interaction {
            user_id: user_idx[&u],
            movie_id: movie_idx[&m],
            rating,
            timestamp,
        })
        .collect();
    let metas = movies
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let rm = &raw_movies[m];
            let mut genre_ids: Vec<u32> = rm.genres.iter().map(|g| genre_idx[g.as_str()]).collect();
            genre_ids.sort_unstable();
            genre_ids.dedup();
            MovieMeta {
                movie_id: i as u32,
                genre_ids,
                release_year: rm.release_year,
            }
        })
        .collect();

    Ok(Corpus {
        interactions,
        movies: metas,
        maps: IdMaps { users, movies, genres },
    })
}

pub fn load_corpus(ratings: &Path, movies: &Path) -> Result<Corpus> {
    load_interactions(File::open(ratings)?, File::open(movies)?)
}

/// Sidecar `movieId,releaseYear` CSV keyed by original movie id.
pub fn load_release_years<R: Read>(source: R) -> Result<HashMap<u64, i32>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("release years header: {e}")))?
        .clone();
    let id_col = column(&headers, "movieId").ok_or_else(|| Error::data("release years header lacks movieId"))?;
    let year_col =
        column(&headers, "releaseYear").ok_or_else(|| Error::data("release years header lacks releaseYear"))?;
    let mut out = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(format!("release years: {e}")))?;
        let line = line_of(&record);
        let id = parse(
            field(&record, id_col, "movieId", "release years")?,
            "movieId",
            "release years",
            line,
        )?;
        let year = parse(
            field(&record, year_col, "releaseYear", "release years")?,
            "releaseYear",
            "release years",
            line,
        )?;
        out.insert(id, year);
    }
    Ok(out)
}

pub fn apply_release_years(corpus: &mut Corpus, years: &HashMap<u64, i32>) {
    for meta in &mut corpus.movies {
        if let Some(&y) = years.get(&corpus.maps.movies[meta.movie_id as usize]) {
            meta.release_year = Some(y);
        }
    }
}
