use std::fs::File;
use std::io::{BufReader, Write};

use playdecay::eval::{
    cold_start_experiment, run_grid, write_cells_csv, write_plot_csv, write_reports_csv, GridCell, GridSpec,
};
use playdecay::playlog::{
    hourly_frequencies, parse_log, split_by_months, split_temporal, write_log, write_rejections, ContextSegment,
    HabitScope, LogFormat, ParsedLog, PlayLog, TemporalSplit,
};
use playdecay::ratings::{plain_ratings, user_profiles};

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::output::OutputDir;

fn read_log(cfg: &RunConfig) -> Result<ParsedLog, Failure> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Failure::Usage("an --input play log is required".into()))?;
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    let parsed = parse_log(BufReader::new(file), &LogFormat::default(), cfg.offset()?)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    if !parsed.rejections.is_empty() {
        eprintln!("warning: {} malformed lines skipped", parsed.rejections.len());
    }
    Ok(parsed)
}

fn split(cfg: &RunConfig, log: &PlayLog) -> Result<TemporalSplit, Failure> {
    Ok(match cfg.boundary()? {
        Some(b) => split_temporal(log, b)?,
        None => split_by_months(log, cfg.train_months, cfg.test_months)?,
    })
}

pub fn summary(log: &PlayLog, rejected: usize) -> String {
    let span = log.t_max() - log.t_min();
    format!(
        "{} users, {} songs, {} plays\nspan {} .. {} ({} days)\nrejected lines: {rejected}\n",
        log.users().len(),
        log.songs().len(),
        log.len(),
        log.t_min().to_rfc3339(),
        log.t_max().to_rfc3339(),
        span.num_days()
    )
}

pub fn ingest(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), Failure> {
    let parsed = read_log(cfg)?;
    let text = summary(&parsed.log, parsed.rejections.len());
    print!("{text}");
    out.write("summary.txt", |w| Ok(w.write_all(text.as_bytes())?))?;
    out.write("plays.tsv", |w| write_log(&parsed.log, w))?;
    out.write("rejections.tsv", |w| write_rejections(&parsed.rejections, w))
}

pub fn grid(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), Failure> {
    let parsed = read_log(cfg)?;
    let split = split(cfg, &parsed.log)?;
    let spec = GridSpec {
        contexts: cfg.contexts.clone(),
        variants: cfg.variants.clone(),
        methods: cfg.methods.clone(),
    };
    let exp = cfg.experiment();
    let cells = run_grid(&split.train, &split.test, &spec, &exp);

    let rating: Vec<&GridCell> = cells.iter().filter(|c| c.method.predicts_ratings()).collect();
    let ranking: Vec<&GridCell> = cells.iter().filter(|c| c.method.ranks_items()).collect();
    out.write("ratings.csv", |w| write_cells_csv(w, &rating, &exp))?;
    out.write("ranking.csv", |w| write_cells_csv(w, &ranking, &exp))?;
    out.write("plot.csv", |w| {
        write_plot_csv(w, cells.iter().filter_map(|c| c.outcome.as_ref().ok()))
    })?;

    let failed: Vec<&GridCell> = cells.iter().filter(|c| c.outcome.is_err()).collect();
    for c in &failed {
        if let Err(e) = &c.outcome {
            eprintln!("cell {}/{}/{} failed: {e}", c.method, c.context, c.variant);
        }
    }
    eprintln!("{} cells, {} failed", cells.len(), failed.len());
    if failed.len() == cells.len() {
        if let Some(Err(e)) = cells.into_iter().next().map(|c| c.outcome) {
            return Err(e.into());
        }
    }
    Ok(())
}

pub fn cold_start(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), Failure> {
    let methods: Vec<_> = cfg.methods.iter().copied().filter(|m| m.predicts_ratings()).collect();
    if methods.is_empty() {
        return Err(Failure::Usage(
            "cold start needs at least one rating-prediction method".into(),
        ));
    }
    let parsed = read_log(cfg)?;
    let split = split(cfg, &parsed.log)?;
    let reports = cold_start_experiment(
        &split.train,
        &split.test,
        cfg.m,
        &methods,
        &cfg.variants,
        &cfg.experiment(),
    )?;
    out.write("cold_start.csv", |w| write_reports_csv(w, &reports))
}

pub fn habits(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), Failure> {
    let log = read_log(cfg)?.log;
    let mut series = vec![("all".to_string(), HabitScope::AllUsers)];
    if let Some(name) = &cfg.user {
        let user = log
            .vocab()
            .find_user(name)
            .filter(|&u| log.contains_user(u))
            .ok_or_else(|| Failure::Data(format!("unknown user `{name}`")))?;
        series.push((format!("user={name}"), HabitScope::User(user)));
    }
    let mut hists = Vec::new();
    for (label, scope) in series {
        hists.push((label, hourly_frequencies(&log, scope)?));
    }
    out.write("habits.csv", |w| {
        writeln!(w, "scope,hour,segment,frequency")?;
        for (label, hist) in &hists {
            for (hour, f) in hist.iter().enumerate() {
                let segment = if ContextSegment::Morning.admits(hour as u32) {
                    ContextSegment::Morning
                } else {
                    ContextSegment::Evening
                };
                writeln!(w, "{label},{hour},{segment},{f:.6}")?;
            }
        }
        Ok(())
    })?;

    let profiles = user_profiles(&log, &plain_ratings(&log)?);
    out.write("dtavg.csv", |w| {
        writeln!(w, "user,plays,dtavg")?;
        for p in profiles.values() {
            writeln!(w, "{},{},{:.6}", log.vocab().user_name(p.user), p.total_plays, p.dtavg)?;
        }
        Ok(())
    })
}
