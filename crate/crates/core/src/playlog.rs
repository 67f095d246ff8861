//! Timestamped play events and the immutable log built from them.
//!
//! Identifiers are interned into a [`Vocab`] that is sorted, so comparing
//! [`UserId`]s or [`SongId`]s orders them exactly like their string names.
//! Every log derived from another one (filters, splits) shares the parent's
//! vocabulary, which keeps ids comparable across train and test views.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use chrono::{DateTime, FixedOffset, Months, NaiveDateTime, SecondsFormat, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct UserId(pub(crate) u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SongId(pub(crate) u32);

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl SongId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Sorted, deduplicated user and song names.
#[derive(Debug, Default, PartialEq)]
pub struct Vocab {
    users: Vec<String>,
    songs: Vec<String>,
    user_lookup: HashMap<String, UserId>,
    song_lookup: HashMap<String, SongId>,
}

impl Vocab {
    fn from_sets(users: BTreeSet<String>, songs: BTreeSet<String>) -> Self {
        let users: Vec<String> = users.into_iter().collect();
        let songs: Vec<String> = songs.into_iter().collect();
        let user_lookup = users
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), UserId(i as u32)))
            .collect();
        let song_lookup = songs
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), SongId(i as u32)))
            .collect();
        Vocab {
            users,
            songs,
            user_lookup,
            song_lookup,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_songs(&self) -> usize {
        self.songs.len()
    }

    pub fn user_name(&self, user: UserId) -> &str {
        &self.users[user.index()]
    }

    pub fn song_name(&self, song: SongId) -> &str {
        &self.songs[song.index()]
    }

    pub fn find_user(&self, name: &str) -> Option<UserId> {
        self.user_lookup.get(name).copied()
    }

    pub fn find_song(&self, name: &str) -> Option<SongId> {
        self.song_lookup.get(name).copied()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlayEvent {
    pub instant: DateTime<Utc>,
    pub user: UserId,
    pub song: SongId,
}

/// An immutable multiset of plays, kept sorted by (instant, user, song).
#[derive(Clone)]
pub struct PlayLog {
    vocab: Arc<Vocab>,
    offset: FixedOffset,
    events: Vec<PlayEvent>,
    users: Vec<UserId>,
    songs: Vec<SongId>,
}

impl fmt::Debug for PlayLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlayLog")
            .field("events", &self.events.len())
            .field("users", &self.users.len())
            .field("songs", &self.songs.len())
            .field("offset", &self.offset)
            .finish()
    }
}

impl PartialEq for PlayLog {
    fn eq(&self, other: &Self) -> bool {
        if self.events.len() != other.events.len() || self.offset != other.offset {
            return false;
        }
        self.events.iter().zip(&other.events).all(|(a, b)| {
            a.instant == b.instant
                && self.vocab.user_name(a.user) == other.vocab.user_name(b.user)
                && self.vocab.song_name(a.song) == other.vocab.song_name(b.song)
        })
    }
}

impl PlayLog {
    /// Builds a log from named records. Fails with `EmptyLog` when there are none.
    pub fn from_records<U, S>(
        records: impl IntoIterator<Item = (U, S, DateTime<Utc>)>,
        offset: FixedOffset,
    ) -> Result<Self>
    where
        U: Into<String>,
        S: Into<String>,
    {
        let records: Vec<(String, String, DateTime<Utc>)> =
            records.into_iter().map(|(u, s, t)| (u.into(), s.into(), t)).collect();
        if let Some((u, s, _)) = records.iter().find(|(u, s, _)| u.is_empty() || s.is_empty()) {
            return Err(Error::InvalidConfig(format!(
                "empty identifier in record (user `{u}`, song `{s}`)"
            )));
        }
        let users: BTreeSet<String> = records.iter().map(|r| r.0.clone()).collect();
        let songs: BTreeSet<String> = records.iter().map(|r| r.1.clone()).collect();
        let vocab = Arc::new(Vocab::from_sets(users, songs));
        let events = records
            .iter()
            .map(|(u, s, t)| PlayEvent {
                instant: *t,
                user: vocab.find_user(u).expect("interned"),
                song: vocab.find_song(s).expect("interned"),
            })
            .collect();
        Self::with_vocab(vocab, offset, events)
    }

    fn with_vocab(vocab: Arc<Vocab>, offset: FixedOffset, mut events: Vec<PlayEvent>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyLog(None));
        }
        events.sort_unstable();
        let users: BTreeSet<UserId> = events.iter().map(|e| e.user).collect();
        let songs: BTreeSet<SongId> = events.iter().map(|e| e.song).collect();
        Ok(PlayLog {
            vocab,
            offset,
            events,
            users: users.into_iter().collect(),
            songs: songs.into_iter().collect(),
        })
    }

    /// A new log over the same vocabulary holding the events that pass `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&PlayEvent) -> bool) -> Result<Self> {
        let events = self.events.iter().copied().filter(|e| keep(e)).collect();
        Self::with_vocab(self.vocab.clone(), self.offset, events)
    }

    /// Union of two logs sharing a vocabulary.
    pub fn merged(&self, other: &PlayLog) -> Result<Self> {
        if !Arc::ptr_eq(&self.vocab, &other.vocab) {
            return Err(Error::InvalidConfig(
                "cannot merge logs built from different vocabularies".into(),
            ));
        }
        let mut events = self.events.clone();
        events.extend_from_slice(&other.events);
        Self::with_vocab(self.vocab.clone(), self.offset, events)
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn offset(&self) -> FixedOffset {
        self.offset
    }

    pub fn events(&self) -> &[PlayEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Distinct users with at least one play, ascending.
    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    /// Distinct songs with at least one play, ascending.
    pub fn songs(&self) -> &[SongId] {
        &self.songs
    }

    pub fn t_min(&self) -> DateTime<Utc> {
        self.events[0].instant
    }

    pub fn t_max(&self) -> DateTime<Utc> {
        self.events[self.events.len() - 1].instant
    }

    pub fn contains_user(&self, user: UserId) -> bool {
        self.users.binary_search(&user).is_ok()
    }

    pub fn play_count(&self, user: UserId, song: SongId) -> usize {
        self.events.iter().filter(|e| e.user == user && e.song == song).count()
    }

    pub fn play_counts(&self) -> BTreeMap<(UserId, SongId), usize> {
        let mut counts = BTreeMap::new();
        for e in &self.events {
            *counts.entry((e.user, e.song)).or_insert(0) += 1;
        }
        counts
    }

    /// Play instants grouped per (user, song), in ascending pair then time order.
    pub fn plays_by_pair(&self) -> BTreeMap<(UserId, SongId), Vec<DateTime<Utc>>> {
        let mut out: BTreeMap<(UserId, SongId), Vec<DateTime<Utc>>> = BTreeMap::new();
        for e in &self.events {
            out.entry((e.user, e.song)).or_default().push(e.instant);
        }
        out
    }

    /// First play of every user.
    pub fn first_plays(&self) -> BTreeMap<UserId, DateTime<Utc>> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            out.entry(e.user).or_insert(e.instant);
        }
        out
    }

    /// Hour of day (0..24) of an instant in the log's timezone.
    pub fn local_hour(&self, instant: DateTime<Utc>) -> u32 {
        instant.with_timezone(&self.offset).hour()
    }

    /// Time of day in fractional hours, in [0, 24).
    pub fn fractional_hour(&self, instant: DateTime<Utc>) -> f64 {
        let t = instant.with_timezone(&self.offset);
        t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0
    }

    pub fn restrict_users(&self, users: &HashSet<UserId>) -> Result<Self> {
        self.filter(|e| users.contains(&e.user))
    }
}

/// Time-of-day segments used for contextual pre-filtering.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextSegment {
    #[serde(rename = "day")]
    Day24h,
    Morning,
    Evening,
}

impl ContextSegment {
    pub const ALL: [ContextSegment; 3] = [ContextSegment::Day24h, ContextSegment::Morning, ContextSegment::Evening];

    pub const MORNING_START: u32 = 5;
    pub const MORNING_END: u32 = 18;

    /// Morning is [05:00, 18:00); Evening is everything else.
    pub fn admits(self, hour: u32) -> bool {
        let morning = (Self::MORNING_START..Self::MORNING_END).contains(&hour);
        match self {
            ContextSegment::Day24h => true,
            ContextSegment::Morning => morning,
            ContextSegment::Evening => !morning,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ContextSegment::Day24h => "day",
            ContextSegment::Morning => "morning",
            ContextSegment::Evening => "evening",
        }
    }
}

impl fmt::Display for ContextSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ContextSegment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "day" | "day24h" | "24h" => Ok(ContextSegment::Day24h),
            "morning" => Ok(ContextSegment::Morning),
            "evening" => Ok(ContextSegment::Evening),
            other => Err(Error::InvalidConfig(format!("unknown context `{other}`"))),
        }
    }
}

pub fn filter_context(log: &PlayLog, segment: ContextSegment) -> Result<PlayLog> {
    if segment == ContextSegment::Day24h {
        return Ok(log.clone());
    }
    log.filter(|e| segment.admits(log.local_hour(e.instant)))
        .map_err(|_| Error::empty(format!("no plays in the {segment} segment")))
}

#[derive(Clone, Debug)]
pub struct TemporalSplit {
    pub train: PlayLog,
    pub test: PlayLog,
    pub boundary: DateTime<Utc>,
}

/// Train gets every play strictly before `boundary`, test the rest.
pub fn split_temporal(log: &PlayLog, boundary: DateTime<Utc>) -> Result<TemporalSplit> {
    let train = log
        .filter(|e| e.instant < boundary)
        .map_err(|_| Error::DegenerateSplit(format!("no plays before {boundary}")))?;
    let test = log
        .filter(|e| e.instant >= boundary)
        .map_err(|_| Error::DegenerateSplit(format!("no plays at or after {boundary}")))?;
    Ok(TemporalSplit { train, test, boundary })
}

/// Split anchored at the first play: `train_months` of training data followed
/// by `test_months` of test data. Later plays are dropped.
pub fn split_by_months(log: &PlayLog, train_months: u32, test_months: u32) -> Result<TemporalSplit> {
    if train_months == 0 || test_months == 0 {
        return Err(Error::InvalidConfig(
            "train and test windows must each span at least one month".into(),
        ));
    }
    let start = log.t_min();
    let boundary = start
        .checked_add_months(Months::new(train_months))
        .ok_or_else(|| Error::InvalidConfig("train window overflows the calendar".into()))?;
    let end = boundary
        .checked_add_months(Months::new(test_months))
        .ok_or_else(|| Error::InvalidConfig("test window overflows the calendar".into()))?;
    let windowed = log.filter(|e| e.instant < end)?;
    split_temporal(&windowed, boundary)
}

/// Drops test plays of (user, song) pairs that also occur in train.
pub fn dedupe_test_pairs(split: &TemporalSplit) -> Result<TemporalSplit> {
    let seen: HashSet<(UserId, SongId)> = split.train.events().iter().map(|e| (e.user, e.song)).collect();
    let test = split
        .test
        .filter(|e| !seen.contains(&(e.user, e.song)))
        .map_err(|_| Error::empty("every test pair also occurs in train"))?;
    Ok(TemporalSplit {
        train: split.train.clone(),
        test,
        boundary: split.boundary,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum HabitScope {
    AllUsers,
    User(UserId),
}

/// Fraction of plays falling in each local hour of the day.
pub fn hourly_frequencies(log: &PlayLog, scope: HabitScope) -> Result<[f64; 24]> {
    if let HabitScope::User(u) = scope {
        if !log.contains_user(u) {
            let name = log.vocab().users.get(u.index()).cloned().unwrap_or_default();
            return Err(Error::UnknownUser(name));
        }
    }
    let mut counts = [0usize; 24];
    let mut total = 0usize;
    for e in log.events() {
        if let HabitScope::User(u) = scope {
            if e.user != u {
                continue;
            }
        }
        counts[log.local_hour(e.instant) as usize] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyLog(None));
    }
    let mut out = [0.0; 24];
    for (bin, c) in out.iter_mut().zip(counts) {
        *bin = c as f64 / total as f64;
    }
    Ok(out)
}

/// Column layout of an input play log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogFormat {
    pub delimiter: char,
    pub user_col: usize,
    pub time_col: usize,
    pub artist_name_col: Option<usize>,
    pub track_id_col: Option<usize>,
    pub track_name_col: Option<usize>,
}

impl Default for LogFormat {
    /// `user  timestamp  artist-id  artist-name  track-id  track-name`
    fn default() -> Self {
        LogFormat {
            delimiter: '\t',
            user_col: 0,
            time_col: 1,
            artist_name_col: Some(3),
            track_id_col: Some(4),
            track_name_col: Some(5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct ParsedLog {
    pub log: PlayLog,
    pub rejections: Vec<Rejection>,
}

/// Parses a line-oriented play log. Malformed lines are reported, not fatal;
/// blank lines and lines starting with `#` are skipped.
pub fn parse_log<R: BufRead>(source: R, format: &LogFormat, offset: FixedOffset) -> Result<ParsedLog> {
    let mut records = Vec::new();
    let mut rejections = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_record(trimmed, format, offset) {
            Ok(rec) => records.push(rec),
            Err(reason) => rejections.push(Rejection { line: line_no, reason }),
        }
    }
    if records.is_empty() {
        return Err(Error::empty("no well-formed records"));
    }
    let log = PlayLog::from_records(records, offset)?;
    Ok(ParsedLog { log, rejections })
}

fn parse_record(
    line: &str,
    format: &LogFormat,
    offset: FixedOffset,
) -> std::result::Result<(String, String, DateTime<Utc>), String> {
    let cols: Vec<&str> = line.split(format.delimiter).collect();
    let col = |i: Option<usize>| i.and_then(|i| cols.get(i)).map(|s| s.trim()).unwrap_or("");
    let user = col(Some(format.user_col));
    if user.is_empty() {
        return Err("missing user".into());
    }
    let raw_time = cols
        .get(format.time_col)
        .map(|s| s.trim())
        .ok_or_else(|| "missing timestamp column".to_string())?;
    let instant = parse_timestamp(raw_time, offset)?;
    let track_id = col(format.track_id_col);
    let song = if !track_id.is_empty() {
        track_id.to_string()
    } else {
        let artist = col(format.artist_name_col);
        let track = col(format.track_name_col);
        if artist.is_empty() && track.is_empty() {
            return Err("missing song identifier".into());
        }
        format!("{artist} - {track}")
    };
    Ok((user.to_string(), song, instant))
}

/// ISO-8601 with an offset, or a naive timestamp read in the configured zone.
pub fn parse_timestamp(raw: &str, offset: FixedOffset) -> std::result::Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Ok(t.with_timezone(&Utc));
    }
    for pattern in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, pattern) {
            return naive
                .and_local_timezone(offset)
                .single()
                .map(|t| t.with_timezone(&Utc))
                .ok_or_else(|| format!("ambiguous local timestamp `{raw}`"));
        }
    }
    Err(format!("unparseable timestamp `{raw}`"))
}

/// Parses `UTC`, `Z`, `+02:00`, `-0530` or `+2`.
pub fn parse_offset(raw: &str) -> Result<FixedOffset> {
    let s = raw.trim();
    if s.eq_ignore_ascii_case("utc") || s == "Z" {
        return Ok(FixedOffset::east_opt(0).expect("zero offset"));
    }
    let bad = || Error::InvalidConfig(format!("invalid timezone offset `{raw}`"));
    let (sign, rest) = match s.as_bytes().first() {
        Some(b'+') => (1, &s[1..]),
        Some(b'-') => (-1, &s[1..]),
        _ => return Err(bad()),
    };
    let digits: String = rest.chars().filter(|c| *c != ':').collect();
    let (h, m) = match digits.len() {
        1 | 2 => (digits.parse::<i32>().map_err(|_| bad())?, 0),
        4 => (
            digits[..2].parse::<i32>().map_err(|_| bad())?,
            digits[2..].parse::<i32>().map_err(|_| bad())?,
        ),
        _ => return Err(bad()),
    };
    if m >= 60 {
        return Err(bad());
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(bad)
}

/// Writes the log in the default six-column layout, song id in the track-id column.
pub fn write_log<W: Write>(log: &PlayLog, mut out: W) -> Result<()> {
    for e in log.events() {
        writeln!(
            out,
            "{}\t{}\t\t\t{}\t",
            log.vocab.user_name(e.user),
            e.instant.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            log.vocab.song_name(e.song)
        )?;
    }
    Ok(())
}

pub fn write_rejections<W: Write>(rejections: &[Rejection], mut out: W) -> Result<()> {
    writeln!(out, "line\treason")?;
    for r in rejections {
        writeln!(out, "{}\t{}", r.line, r.reason.replace(['\t', '\n'], " "))?;
    }
    Ok(())
}
