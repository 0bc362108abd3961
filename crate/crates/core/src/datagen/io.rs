//! Line-oriented dataset container.
//!
//! ```text
//! outfitrank-dataset <version>
//! [header]     key value lines: world config, seed, and record counts
//! [items]      <id> <category> <feature>…
//! [outfits]    <id> <item id>…
//! [users]      <id> warm|cold
//! [splits]     <user id> <split> <outfit id>…   (cold users use `profile` and `test`)
//! [oracle]     <user id> <style>…               (optional)
//! ```
//!
//! Floats are written with nine significant digits, enough to round-trip `f32` exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{ColdUser, Dataset, Item, Oracle, Outfit, Split, UserSplits, WorldConfig};

pub const DATASET_VERSION: u32 = 1;
const MAGIC: &str = "outfitrank-dataset";
const SECTIONS: [&str; 6] = ["header", "items", "outfits", "users", "splits", "oracle"];

fn fmt_f32(v: f32) -> String {
    format!("{v:.8e}")
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_dataset(d: &Dataset, w: &mut impl Write) -> Result<()> {
    let c = &d.config;
    writeln!(w, "{MAGIC} {DATASET_VERSION}")?;
    writeln!(w, "[header]")?;
    writeln!(w, "seed {}", c.seed)?;
    writeln!(w, "users {}", c.users)?;
    writeln!(w, "cold_users {}", c.cold_users)?;
    writeln!(w, "categories {}", c.categories.join(","))?;
    writeln!(w, "items_per_category {}", c.items_per_category)?;
    writeln!(w, "d_in {}", c.d_in)?;
    writeln!(w, "style_dim {}", c.style_dim)?;
    writeln!(w, "noise {}", c.noise)?;
    writeln!(w, "prototype_scale {}", c.prototype_scale)?;
    writeln!(w, "positives_per_user {}", c.positives_per_user)?;
    writeln!(w, "cold_profile_size {}", c.cold_profile_size)?;
    writeln!(w, "preference_temperature {}", c.preference_temperature)?;
    writeln!(w, "variable_size {}", c.variable_size)?;
    writeln!(w, "min_size {}", c.min_size)?;
    writeln!(w, "max_size {}", c.max_size)?;
    writeln!(w, "item_count {}", d.items.len())?;
    writeln!(w, "outfit_count {}", d.outfits.len())?;
    writeln!(w, "user_count {}", d.users.len() + d.cold_users.len())?;

    writeln!(w, "[items]")?;
    for it in &d.items {
        let feats: Vec<String> = it.features.iter().map(|&v| fmt_f32(v)).collect();
        writeln!(w, "{} {} {}", it.id, c.categories[it.category], feats.join(" "))?;
    }
    writeln!(w, "[outfits]")?;
    for o in &d.outfits {
        writeln!(w, "{} {}", o.id, join_ids(&o.items))?;
    }
    writeln!(w, "[users]")?;
    for u in 0..d.users.len() {
        writeln!(w, "{u} warm")?;
    }
    for cu in &d.cold_users {
        writeln!(w, "{} cold", cu.id)?;
    }
    writeln!(w, "[splits]")?;
    for (u, s) in d.users.iter().enumerate() {
        for split in Split::ALL {
            writeln!(w, "{u} {} {}", split.name(), join_ids(s.get(split)))?;
        }
    }
    for cu in &d.cold_users {
        writeln!(w, "{} profile {}", cu.id, join_ids(&cu.profile))?;
        writeln!(w, "{} test {}", cu.id, join_ids(&cu.test))?;
    }
    if let Some(oracle) = &d.oracle {
        writeln!(w, "[oracle]")?;
        for (u, style) in oracle.styles.iter().enumerate() {
            let vals: Vec<String> = style.iter().map(|&v| fmt_f32(v)).collect();
            writeln!(w, "{u} {}", vals.join(" "))?;
        }
    }
    Ok(())
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(d, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

fn num<V: std::str::FromStr>(tok: Option<&str>, section: &str, line: usize, what: &str) -> Result<V> {
    let tok = tok.ok_or_else(|| Error::parse(section, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse(section, line, format!("invalid {what} `{tok}`")))
}

fn ids<'a>(toks: impl Iterator<Item = &'a str>, section: &str, line: usize) -> Result<Vec<usize>> {
    toks.map(|t| num(Some(t), section, line, "id")).collect()
}

pub fn read_dataset(r: impl BufRead) -> Result<Dataset> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::parse("header", 1, "empty file"))?;
    let first = first?;
    let mut head = first.split_whitespace();
    if head.next() != Some(MAGIC) {
        return Err(Error::parse("header", 1, "not an outfitrank dataset"));
    }
    let version: u32 = num(head.next(), "header", 1, "version")?;
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DATASET_VERSION,
        });
    }

    let mut section = String::new();
    let mut header: HashMap<String, String> = HashMap::new();
    let mut seen_sections: Vec<String> = Vec::new();
    let mut item_lines: Vec<(usize, String)> = Vec::new();
    let mut outfit_lines: Vec<(usize, String)> = Vec::new();
    let mut user_lines: Vec<(usize, String)> = Vec::new();
    let mut split_lines: Vec<(usize, String)> = Vec::new();
    let mut oracle_lines: Vec<(usize, String)> = Vec::new();
    for (no, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            if !SECTIONS.contains(&name) {
                return Err(Error::parse(name, no, "unknown section"));
            }
            section = name.to_string();
            seen_sections.push(section.clone());
            continue;
        }
        let bucket = match section.as_str() {
            "header" => {
                let (k, v) = trimmed
                    .split_once(' ')
                    .ok_or_else(|| Error::parse("header", no, "expected `key value`"))?;
                header.insert(k.to_string(), v.trim().to_string());
                continue;
            }
            "items" => &mut item_lines,
            "outfits" => &mut outfit_lines,
            "users" => &mut user_lines,
            "splits" => &mut split_lines,
            "oracle" => &mut oracle_lines,
            _ => return Err(Error::parse("header", no, "record before any section")),
        };
        bucket.push((no, trimmed.to_string()));
    }
    for required in ["header", "items", "outfits", "users", "splits"] {
        if !seen_sections.iter().any(|s| s == required) {
            return Err(Error::parse(required, 0, "section missing (file truncated?)"));
        }
    }

    let get = |k: &str| -> Result<&String> {
        header
            .get(k)
            .ok_or_else(|| Error::parse("header", 0, format!("missing key `{k}`")))
    };
    let parse_h = |k: &str| -> Result<usize> { num(Some(get(k)?.as_str()), "header", 0, k) };
    let parse_f = |k: &str| -> Result<f64> { num(Some(get(k)?.as_str()), "header", 0, k) };
    let config = WorldConfig {
        users: parse_h("users")?,
        cold_users: parse_h("cold_users")?,
        categories: get("categories")?.split(',').map(str::to_string).collect(),
        items_per_category: parse_h("items_per_category")?,
        d_in: parse_h("d_in")?,
        style_dim: parse_h("style_dim")?,
        noise: parse_f("noise")?,
        prototype_scale: parse_f("prototype_scale")?,
        positives_per_user: parse_h("positives_per_user")?,
        cold_profile_size: parse_h("cold_profile_size")?,
        preference_temperature: parse_f("preference_temperature")?,
        variable_size: num(Some(get("variable_size")?.as_str()), "header", 0, "variable_size")?,
        min_size: parse_h("min_size")?,
        max_size: parse_h("max_size")?,
        seed: num(Some(get("seed")?.as_str()), "header", 0, "seed")?,
    };
    let item_count = parse_h("item_count")?;
    let outfit_count = parse_h("outfit_count")?;
    let user_count = parse_h("user_count")?;

    let mut items = Vec::with_capacity(item_lines.len());
    for (no, line) in &item_lines {
        let mut t = line.split_whitespace();
        let id: usize = num(t.next(), "items", *no, "item id")?;
        let cat_name = t.next().ok_or_else(|| Error::parse("items", *no, "missing category"))?;
        let category = config
            .categories
            .iter()
            .position(|c| c == cat_name)
            .ok_or_else(|| Error::parse("items", *no, format!("unknown category `{cat_name}`")))?;
        let features: Vec<f32> = t.map(|v| num(Some(v), "items", *no, "feature")).collect::<Result<_>>()?;
        if features.len() != config.d_in {
            return Err(Error::parse("items", *no, format!("{} features, expected {}", features.len(), config.d_in)));
        }
        if id != items.len() {
            return Err(Error::parse("items", *no, format!("item id {id} out of order")));
        }
        items.push(Item { id, category, features });
    }
    if items.len() != item_count {
        return Err(Error::parse("items", 0, format!("{} of {item_count} items present", items.len())));
    }

    let mut outfits = Vec::with_capacity(outfit_lines.len());
    for (no, line) in &outfit_lines {
        let mut t = line.split_whitespace();
        let id: usize = num(t.next(), "outfits", *no, "outfit id")?;
        let members = ids(t, "outfits", *no)?;
        if members.is_empty() {
            return Err(Error::parse("outfits", *no, "empty outfit"));
        }
        if let Some(bad) = members.iter().find(|&&i| i >= items.len()) {
            return Err(Error::parse("outfits", *no, format!("unknown item {bad}")));
        }
        if id != outfits.len() {
            return Err(Error::parse("outfits", *no, format!("outfit id {id} out of order")));
        }
        outfits.push(Outfit { id, items: members });
    }
    if outfits.len() != outfit_count {
        return Err(Error::parse("outfits", 0, format!("{} of {outfit_count} outfits present", outfits.len())));
    }

    let mut warm = 0usize;
    let mut cold_ids = Vec::new();
    for (no, line) in &user_lines {
        let mut t = line.split_whitespace();
        let id: usize = num(t.next(), "users", *no, "user id")?;
        match t.next() {
            Some("warm") if id == warm && cold_ids.is_empty() => warm += 1,
            Some("cold") => cold_ids.push(id),
            _ => return Err(Error::parse("users", *no, "expected `<id> warm|cold` with warm users first")),
        }
    }
    if warm + cold_ids.len() != user_count {
        return Err(Error::parse("users", 0, format!("{} of {user_count} users present", warm + cold_ids.len())));
    }

    let mut users = vec![UserSplits::default(); warm];
    let mut cold_users: Vec<ColdUser> = cold_ids
        .iter()
        .map(|&id| ColdUser {
            id,
            profile: Vec::new(),
            test: Vec::new(),
        })
        .collect();
    let mut split_records = 0;
    for (no, line) in &split_lines {
        let mut t = line.split_whitespace();
        let user: usize = num(t.next(), "splits", *no, "user id")?;
        let name = t.next().ok_or_else(|| Error::parse("splits", *no, "missing split name"))?;
        let list = ids(t, "splits", *no)?;
        if let Some(bad) = list.iter().find(|&&o| o >= outfits.len()) {
            return Err(Error::parse("splits", *no, format!("unknown outfit {bad}")));
        }
        if user < warm {
            let split: Split = name
                .parse()
                .map_err(|_| Error::parse("splits", *no, format!("unknown split `{name}`")))?;
            *users[user].get_mut(split) = list;
        } else {
            let cu = cold_users
                .iter_mut()
                .find(|c| c.id == user)
                .ok_or_else(|| Error::parse("splits", *no, format!("unknown user {user}")))?;
            match name {
                "profile" => cu.profile = list,
                "test" => cu.test = list,
                _ => return Err(Error::parse("splits", *no, format!("unknown cold split `{name}`"))),
            }
        }
        split_records += 1;
    }
    let expected_records = warm * Split::ALL.len() + cold_users.len() * 2;
    if split_records != expected_records {
        return Err(Error::parse("splits", 0, format!("{split_records} of {expected_records} split records present")));
    }

    let oracle = if seen_sections.iter().any(|s| s == "oracle") {
        let mut styles = Vec::with_capacity(oracle_lines.len());
        for (no, line) in &oracle_lines {
            let mut t = line.split_whitespace();
            let id: usize = num(t.next(), "oracle", *no, "user id")?;
            if id != styles.len() {
                return Err(Error::parse("oracle", *no, format!("user id {id} out of order")));
            }
            let z: Vec<f32> = t.map(|v| num(Some(v), "oracle", *no, "style value")).collect::<Result<_>>()?;
            if z.len() != config.d_in {
                return Err(Error::parse("oracle", *no, format!("{} values, expected {}", z.len(), config.d_in)));
            }
            styles.push(z);
        }
        if styles.len() != user_count {
            return Err(Error::parse("oracle", 0, format!("{} of {user_count} styles present", styles.len())));
        }
        Some(Oracle { styles })
    } else {
        None
    };

    Ok(Dataset {
        config,
        items,
        outfits,
        users,
        cold_users,
        oracle,
    })
}
