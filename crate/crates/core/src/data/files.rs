use crate::binio::{ByteReader, ByteWriter};
use crate::data::{ClientPartition, PartitionKind, RatingSample, WatchHistorySample};
use crate::error::{Error, Result};

pub const SAMPLES_MAGIC: &[u8; 4] = b"FQD1";
pub const PARTITION_MAGIC: &[u8; 4] = b"FQP1";
const VERSION: u16 = 1;
const KIND_WATCH: u8 = 0;
const KIND_RATING: u8 = 1;

fn header(w: &mut ByteWriter, magic: &[u8; 4], kind: u8, count: usize) {
    w.bytes(magic);
    w.u16(VERSION);
    w.u8(kind);
    w.u32(count as u32);
}

fn read_header(r: &mut ByteReader<'_>, magic: &[u8; 4], min_record: usize) -> Result<(u8, usize)> {
    r.expect_magic(magic)?;
    let at = r.position();
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::decoding(at, format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    let count = r.count(min_record)?;
    Ok((kind, count))
}

fn expect_kind(r: &ByteReader<'_>, got: u8, want: u8) -> Result<()> {
    if got != want {
        return Err(Error::decoding(
            r.position() - 5,
            format!("record kind {got}, expected {want}"),
        ));
    }
    Ok(())
}

fn ids(r: &mut ByteReader<'_>) -> Result<Vec<u32>> {
    let n = r.count(4)?;
    (0..n).map(|_| r.u32()).collect()
}

fn write_ids(w: &mut ByteWriter, ids: &[u32]) {
    w.u32(ids.len() as u32);
    for &id in ids {
        w.u32(id);
    }
}

pub fn encode_watch_histories(samples: &[WatchHistorySample]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    header(&mut w, SAMPLES_MAGIC, KIND_WATCH, samples.len());
    for s in samples {
        w.u32(s.user_id);
        w.u32(s.target);
        write_ids(&mut w, &s.history);
    }
    w.into_inner()
}

pub fn decode_watch_histories(bytes: &[u8]) -> Result<Vec<WatchHistorySample>> {
    let mut r = ByteReader::new(bytes);
    let (kind, count) = read_header(&mut r, SAMPLES_MAGIC, 12)?;
    expect_kind(&r, kind, KIND_WATCH)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let user_id = r.u32()?;
        let target = r.u32()?;
        let history = ids(&mut r)?;
        out.push(WatchHistorySample {
            user_id,
            history,
            target,
        });
    }
    r.finish()?;
    Ok(out)
}

pub fn encode_rating_samples(samples: &[RatingSample]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    header(&mut w, SAMPLES_MAGIC, KIND_RATING, samples.len());
    for s in samples {
        w.u32(s.user_id);
        w.u32(s.movie_id);
        w.u8(s.rating_class);
        w.f64(s.movie_age);
        write_ids(&mut w, &s.genre_ids);
    }
    w.into_inner()
}

pub fn decode_rating_samples(bytes: &[u8]) -> Result<Vec<RatingSample>> {
    let mut r = ByteReader::new(bytes);
    let (kind, count) = read_header(&mut r, SAMPLES_MAGIC, 21)?;
    expect_kind(&r, kind, KIND_RATING)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let user_id = r.u32()?;
        let movie_id = r.u32()?;
        let at = r.position();
        let rating_class = r.u8()?;
        if rating_class > 9 {
            return Err(Error::decoding(at, format!("rating class {rating_class} out of range")));
        }
        let movie_age = r.f64()?;
        let genre_ids = ids(&mut r)?;
        out.push(RatingSample {
            user_id,
            movie_id,
            genre_ids,
            movie_age,
            rating_class,
        });
    }
    r.finish()?;
    Ok(out)
}

pub fn encode_partition(partition: &ClientPartition) -> Vec<u8> {
    let kind = match partition.kind {
        PartitionKind::IidEqual => 0,
        PartitionKind::PerUser => 1,
    };
    let mut w = ByteWriter::new();
    header(&mut w, PARTITION_MAGIC, kind, partition.clients.len());
    for c in &partition.clients {
        w.u32(c.len() as u32);
        for &i in c {
            w.u32(i as u32);
        }
    }
    w.into_inner()
}

pub fn decode_partition(bytes: &[u8]) -> Result<ClientPartition> {
    let mut r = ByteReader::new(bytes);
    let (kind, count) = read_header(&mut r, PARTITION_MAGIC, 4)?;
    let kind = match kind {
        0 => PartitionKind::IidEqual,
        1 => PartitionKind::PerUser,
        other => {
            return Err(Error::decoding(
                r.position() - 5,
                format!("unknown partition kind {other}"),
            ))
        }
    };
    let mut clients = Vec::with_capacity(count);
    for _ in 0..count {
        clients.push(ids(&mut r)?.into_iter().map(|i| i as usize).collect());
    }
    r.finish()?;
    Ok(ClientPartition { kind, clients })
}
