//! Ingestion of campaign event logs into per-customer monthly
//! treatment/control records.
//!
//! Events come in one of two shapes, chosen by header:
//!
//! * attributed: `customer,month,campaign,purchase`, one row per purchase
//!   with `campaign` set to a portfolio id or `none`;
//! * raw: `customer,time,event,campaign,amount` with `time` in days since
//!   the start of the log and `event` one of `offer_received`,
//!   `offer_viewed`, `offer_completed`, `transaction`. A transaction is
//!   attributed to a campaign iff its time falls in
//!   `[received, received + duration]` of an offer the customer received
//!   (earliest such offer first); otherwise it is non-promotional. Month is
//!   `floor(time / 30) + 1`.
//!
//! Each customer-month yields one treatment row per campaign received and
//! one control row. Purchases are scaled to a 30-day rate: the campaign's
//! duration for treatment rows and the rest of the month for control rows.
//! Identical rows are dropped, missing profile values become zero, and
//! malformed rows are skipped and reported with their line number.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use crate::CliError;

pub const MONTH_DAYS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub id: String,
    pub kind: String,
    pub channels: String,
    pub difficulty: f64,
    pub duration: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub age: f64,
    pub female: bool,
    pub income: f64,
    pub member_since: String,
}

impl Profile {
    fn imputed() -> Self {
        Profile { age: 0.0, female: false, income: 0.0, member_since: String::new() }
    }
}

/// One purchase (or zero-purchase offer) attributed to a customer-month.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub customer: String,
    pub month: i64,
    /// `None` for non-promotional behaviour.
    pub campaign: Option<String>,
    pub purchase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalformedRow {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Output row: one arm of one customer-month.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyRecord {
    pub customer: String,
    pub month: i64,
    /// Campaign id, or `none` for the control row.
    pub campaign: String,
    pub window_days: f64,
    pub purchase: f64,
    pub purchase_30d: f64,
    pub profitable: u8,
    pub split: Split,
    pub age: u8,
    pub gender: u8,
    pub income: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    pub age: f64,
    pub income: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub command: &'static str,
    pub event_shape: &'static str,
    pub events_read: usize,
    pub duplicates_dropped: usize,
    pub malformed_count: usize,
    pub malformed_rows: Vec<MalformedRow>,
    pub records: usize,
    pub customers: usize,
    pub months: Vec<i64>,
    pub split_counts: BTreeMap<&'static str, usize>,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub age_threshold: Option<f64>,
    pub income_threshold: Option<f64>,
    pub validation_months: usize,
    pub test_months: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { age_threshold: None, income_threshold: None, validation_months: 1, test_months: 1 }
    }
}

pub struct Ingested {
    pub records: Vec<MonthlyRecord>,
    pub summary: IngestSummary,
}

/// A CSV file read as text rows with its header, keeping line numbers.
struct Table {
    label: String,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    fn read(path: &Path, label: &str) -> Result<Table, CliError> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_ascii_lowercase())
            .collect();
        let mut rows = Vec::new();
        let mut record = csv::StringRecord::new();
        loop {
            let line = reader.position().line();
            match reader.read_record(&mut record) {
                Ok(true) => rows.push((line, record.iter().map(|c| c.trim().to_string()).collect())),
                Ok(false) => break,
                Err(e) => return Err(CliError::Data(format!("{}:{line}: {e}", path.display()))),
            }
        }
        Ok(Table { label: label.to_string(), header, rows })
    }

    fn column(&self, names: &[&str]) -> Option<usize> {
        names.iter().find_map(|n| self.header.iter().position(|h| h == n))
    }

    fn require(&self, names: &[&str]) -> Result<usize, CliError> {
        self.column(names)
            .ok_or_else(|| CliError::Data(format!("{}: missing column `{}`", self.label, names[0])))
    }

    /// Rows with the header's width, identical rows dropped. Returns the
    /// rows and the number of duplicates removed.
    fn clean_rows(&self, malformed: &mut Vec<MalformedRow>) -> (Vec<(u64, &[String])>, usize) {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut duplicates = 0;
        for (line, row) in &self.rows {
            if row.len() != self.header.len() {
                malformed.push(MalformedRow {
                    file: self.label.clone(),
                    line: *line,
                    reason: format!("expected {} fields, found {}", self.header.len(), row.len()),
                });
                continue;
            }
            if !seen.insert(row.as_slice()) {
                duplicates += 1;
                continue;
            }
            out.push((*line, row.as_slice()));
        }
        (out, duplicates)
    }
}

fn bad(table: &Table, line: u64, reason: impl Into<String>) -> MalformedRow {
    MalformedRow { file: table.label.clone(), line, reason: reason.into() }
}

fn parse_number(text: &str) -> Option<f64> {
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Missing values impute to zero; present values must parse.
fn parse_or_zero(text: &str) -> Option<f64> {
    if text.is_empty() || text.eq_ignore_ascii_case("nan") || text.eq_ignore_ascii_case("na") {
        Some(0.0)
    } else {
        parse_number(text)
    }
}

pub fn read_portfolio(path: &Path) -> Result<BTreeMap<String, Campaign>, CliError> {
    let table = Table::read(path, "portfolio")?;
    let id = table.require(&["id", "campaign", "c"])?;
    let kind = table.column(&["type"]);
    let channels = table.column(&["channels"]);
    let difficulty = table.column(&["difficulty"]);
    let duration = table.require(&["duration"])?;
    let reward = table.require(&["reward"])?;
    let mut out = BTreeMap::new();
    for (line, row) in &table.rows {
        let cell = |i: Option<usize>| i.and_then(|i| row.get(i)).cloned().unwrap_or_default();
        let number = |i: usize, name: &str| {
            parse_or_zero(&row[i]).ok_or_else(|| CliError::Data(format!("portfolio:{line}: invalid {name}")))
        };
        if row.len() != table.header.len() {
            return Err(CliError::Data(format!("portfolio:{line}: wrong number of fields")));
        }
        let campaign = Campaign {
            id: row[id].clone(),
            kind: cell(kind),
            channels: cell(channels),
            difficulty: difficulty.map(|i| number(i, "difficulty")).transpose()?.unwrap_or(0.0),
            duration: number(duration, "duration")?,
            reward: number(reward, "reward")?,
        };
        if !(campaign.duration > 0.0 && campaign.duration < MONTH_DAYS) {
            return Err(CliError::Data(format!("portfolio:{line}: duration must lie in (0, 30) days")));
        }
        out.insert(campaign.id.clone(), campaign);
    }
    Ok(out)
}

pub fn read_profiles(
    path: &Path,
    malformed: &mut Vec<MalformedRow>,
) -> Result<(BTreeMap<String, Profile>, usize), CliError> {
    let table = Table::read(path, "profiles")?;
    let id = table.require(&["id", "customer"])?;
    let age = table.require(&["age"])?;
    let gender = table.require(&["gender"])?;
    let income = table.require(&["income"])?;
    let member = table.require(&["became_member_on", "membership_date", "member_since"])?;
    let (rows, duplicates) = table.clean_rows(malformed);
    let mut out = BTreeMap::new();
    for (line, row) in rows {
        let (Some(a), Some(inc)) = (parse_or_zero(&row[age]), parse_or_zero(&row[income])) else {
            malformed.push(bad(&table, line, "age and income must be numeric"));
            continue;
        };
        if row[id].is_empty() {
            malformed.push(bad(&table, line, "empty customer id"));
            continue;
        }
        let profile = Profile {
            age: a,
            female: row[gender].eq_ignore_ascii_case("f"),
            income: inc,
            member_since: row[member].clone(),
        };
        if out.insert(row[id].clone(), profile).is_some() {
            malformed.push(bad(&table, line, format!("conflicting duplicate profile for {}", row[id])));
        }
    }
    Ok((out, duplicates))
}

/// Reads the event log in either shape. Returns the shape name, the number
/// of rows read, the attributed records and the duplicate count.
pub fn read_events(
    path: &Path,
    portfolio: &BTreeMap<String, Campaign>,
    malformed: &mut Vec<MalformedRow>,
) -> Result<(&'static str, usize, Vec<EventRecord>, usize), CliError> {
    let table = Table::read(path, "events")?;
    let read = table.rows.len();
    if table.column(&["month"]).is_some() {
        let (records, dups) = attributed_events(&table, portfolio, malformed)?;
        Ok(("attributed", read, records, dups))
    } else {
        let (records, dups) = raw_events(&table, portfolio, malformed)?;
        Ok(("raw", read, records, dups))
    }
}

fn campaign_ref(text: &str) -> Option<&str> {
    match text {
        "" => None,
        t if t.eq_ignore_ascii_case("none") => None,
        t => Some(t),
    }
}

fn attributed_events(
    table: &Table,
    portfolio: &BTreeMap<String, Campaign>,
    malformed: &mut Vec<MalformedRow>,
) -> Result<(Vec<EventRecord>, usize), CliError> {
    let customer = table.require(&["customer", "id"])?;
    let month = table.require(&["month"])?;
    let campaign = table.require(&["campaign", "campaign_id"])?;
    let purchase = table.require(&["purchase", "amount"])?;
    let (rows, duplicates) = table.clean_rows(malformed);
    let mut out = Vec::new();
    for (line, row) in rows {
        let Ok(m) = row[month].parse::<i64>() else {
            malformed.push(bad(table, line, "month must be an integer"));
            continue;
        };
        let Some(p) = parse_or_zero(&row[purchase]).filter(|p| *p >= 0.0) else {
            malformed.push(bad(table, line, "purchase must be a non-negative number"));
            continue;
        };
        let c = campaign_ref(&row[campaign]);
        if let Some(c) = c {
            if !portfolio.contains_key(c) {
                malformed.push(bad(table, line, format!("unknown campaign {c}")));
                continue;
            }
        }
        out.push(EventRecord { customer: row[customer].clone(), month: m, campaign: c.map(String::from), purchase: p });
    }
    Ok((out, duplicates))
}

fn month_of(time: f64) -> i64 {
    (time / MONTH_DAYS).floor() as i64 + 1
}

fn raw_events(
    table: &Table,
    portfolio: &BTreeMap<String, Campaign>,
    malformed: &mut Vec<MalformedRow>,
) -> Result<(Vec<EventRecord>, usize), CliError> {
    let customer = table.require(&["customer", "id"])?;
    let time = table.require(&["time"])?;
    let event = table.require(&["event"])?;
    let campaign = table.require(&["campaign", "campaign_id"])?;
    let amount = table.require(&["amount", "purchase"])?;
    let (rows, duplicates) = table.clean_rows(malformed);
    // Offers per customer: (received, campaign).
    let mut offers: BTreeMap<String, Vec<(f64, String)>> = BTreeMap::new();
    let mut transactions: Vec<(String, f64, f64)> = Vec::new();
    for (line, row) in rows {
        let Some(t) = parse_number(&row[time]).filter(|t| *t >= 0.0) else {
            malformed.push(bad(table, line, "time must be a non-negative number"));
            continue;
        };
        match row[event].as_str() {
            "offer_received" => match campaign_ref(&row[campaign]) {
                Some(c) if portfolio.contains_key(c) => {
                    offers.entry(row[customer].clone()).or_default().push((t, c.to_string()))
                }
                Some(c) => malformed.push(bad(table, line, format!("unknown campaign {c}"))),
                None => malformed.push(bad(table, line, "offer without campaign")),
            },
            "offer_viewed" | "offer_completed" => {}
            "transaction" => match parse_or_zero(&row[amount]).filter(|a| *a >= 0.0) {
                Some(a) => transactions.push((row[customer].clone(), t, a)),
                None => malformed.push(bad(table, line, "amount must be a non-negative number")),
            },
            other => malformed.push(bad(table, line, format!("unknown event `{other}`"))),
        }
    }
    for list in offers.values_mut() {
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    }
    let mut out = Vec::new();
    for (cust, list) in &offers {
        for (t, c) in list {
            out.push(EventRecord { customer: cust.clone(), month: month_of(*t), campaign: Some(c.clone()), purchase: 0.0 });
        }
    }
    for (cust, t, a) in transactions {
        let window = offers.get(&cust).and_then(|list| {
            list.iter().find(|(received, c)| *received <= t && t <= received + portfolio[c].duration)
        });
        let (month, campaign) = match window {
            // Attribute to the month in which the offer arrived.
            Some((received, c)) => (month_of(*received), Some(c.clone())),
            None => (month_of(t), None),
        };
        out.push(EventRecord { customer: cust, month, campaign, purchase: a });
    }
    Ok((out, duplicates))
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Month to split: last `test_months` distinct months are test, the
/// `validation_months` before them validation, the rest train.
pub fn split_months(months: &BTreeSet<i64>, validation: usize, test: usize) -> BTreeMap<i64, Split> {
    let ordered: Vec<i64> = months.iter().copied().collect();
    let n = ordered.len();
    ordered
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let from_end = n - i;
            let split = if from_end <= test {
                Split::Test
            } else if from_end <= test + validation {
                Split::Validation
            } else {
                Split::Train
            };
            (m, split)
        })
        .collect()
}

/// Builds the per-customer monthly records from attributed events.
pub fn monthly_records(
    events: &[EventRecord],
    portfolio: &BTreeMap<String, Campaign>,
    profiles: &BTreeMap<String, Profile>,
    config: &IngestConfig,
) -> (Vec<MonthlyRecord>, Thresholds) {
    // (customer, month) -> (per-campaign purchase, control purchase)
    let mut cells: BTreeMap<(String, i64), (BTreeMap<String, f64>, f64)> = BTreeMap::new();
    for e in events {
        let cell = cells.entry((e.customer.clone(), e.month)).or_default();
        match &e.campaign {
            Some(c) => *cell.0.entry(c.clone()).or_default() += e.purchase,
            None => cell.1 += e.purchase,
        }
    }
    let thresholds = Thresholds {
        age: config.age_threshold.unwrap_or_else(|| median(&mut profiles.values().map(|p| p.age).collect::<Vec<_>>())),
        income: config
            .income_threshold
            .unwrap_or_else(|| median(&mut profiles.values().map(|p| p.income).collect::<Vec<_>>())),
    };
    let months: BTreeSet<i64> = cells.keys().map(|(_, m)| *m).collect();
    let splits = split_months(&months, config.validation_months, config.test_months);
    let missing = Profile::imputed();
    let mut out = Vec::new();
    for ((customer, month), (campaigns, control)) in cells {
        let profile = profiles.get(&customer).unwrap_or(&missing);
        let row = |campaign: String, window: f64, purchase: f64, profitable: bool| MonthlyRecord {
            customer: customer.clone(),
            month,
            campaign,
            window_days: window,
            purchase,
            purchase_30d: purchase * MONTH_DAYS / window,
            profitable: u8::from(profitable),
            split: splits[&month],
            age: u8::from(profile.age >= thresholds.age),
            gender: u8::from(profile.female),
            income: u8::from(profile.income >= thresholds.income),
        };
        let promotional: f64 = campaigns.keys().map(|c| portfolio[c].duration).sum();
        for (c, purchase) in &campaigns {
            let spec = &portfolio[c];
            let scaled = purchase * MONTH_DAYS / spec.duration;
            out.push(row(c.clone(), spec.duration, *purchase, scaled - spec.reward > 0.0));
        }
        let window = (MONTH_DAYS - promotional).max(1.0);
        out.push(row("none".to_string(), window, control, control > 0.0));
    }
    (out, thresholds)
}

pub fn ingest(
    events: &Path,
    profiles: &Path,
    portfolio: &Path,
    config: &IngestConfig,
) -> Result<Ingested, CliError> {
    let portfolio = read_portfolio(portfolio)?;
    let mut malformed = Vec::new();
    let (profiles, profile_dups) = read_profiles(profiles, &mut malformed)?;
    let (shape, read, events, event_dups) = read_events(events, &portfolio, &mut malformed)?;
    let (records, thresholds) = monthly_records(&events, &portfolio, &profiles, config);
    malformed.sort_by(|a, b| (&a.file, a.line).cmp(&(&b.file, b.line)));
    let mut split_counts = BTreeMap::new();
    for r in &records {
        *split_counts.entry(r.split.name()).or_insert(0) += 1;
    }
    let summary = IngestSummary {
        command: "ingest",
        event_shape: shape,
        events_read: read,
        duplicates_dropped: profile_dups + event_dups,
        malformed_count: malformed.len(),
        malformed_rows: malformed,
        records: records.len(),
        customers: records.iter().map(|r| &r.customer).collect::<BTreeSet<_>>().len(),
        months: records.iter().map(|r| r.month).collect::<BTreeSet<_>>().into_iter().collect(),
        split_counts,
        thresholds,
    };
    Ok(Ingested { records, summary })
}

pub fn records_csv(records: &[MonthlyRecord]) -> Result<Vec<u8>, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in records {
        writer.serialize(r).map_err(|e| CliError::Data(format!("csv encoding failed: {e}")))?;
    }
    writer.into_inner().map_err(|e| CliError::Data(format!("csv encoding failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn portfolio() -> BTreeMap<String, Campaign> {
        [("2", 5.0, 10.0), ("4", 7.0, 5.0)]
            .into_iter()
            .map(|(id, duration, reward)| {
                let c = Campaign {
                    id: id.into(),
                    kind: "bogo".into(),
                    channels: "[W,E]".into(),
                    difficulty: 10.0,
                    duration,
                    reward,
                };
                (id.to_string(), c)
            })
            .collect()
    }

    fn event(customer: &str, month: i64, campaign: Option<&str>, purchase: f64) -> EventRecord {
        EventRecord { customer: customer.into(), month, campaign: campaign.map(String::from), purchase }
    }

    #[test]
    fn purchases_scale_to_thirty_days() {
        let events = [
            event("1", 3, Some("2"), 0.0),
            event("1", 3, None, 17.15),
            event("2", 5, Some("4"), 31.78),
            event("2", 5, None, 19.92),
        ];
        let (records, _) = monthly_records(&events, &portfolio(), &BTreeMap::new(), &IngestConfig::default());
        assert_eq!(records.len(), 4);
        let c4 = records.iter().find(|r| r.campaign == "4").unwrap();
        assert!((c4.purchase_30d - 31.78 * 30.0 / 7.0).abs() < 1e-12);
        assert!((c4.purchase_30d - 136.2).abs() < 0.05);
        assert_eq!(c4.profitable, 1);
        let c2 = records.iter().find(|r| r.campaign == "2").unwrap();
        assert_eq!(c2.profitable, 0);
        let control = records.iter().find(|r| r.customer == "1" && r.campaign == "none").unwrap();
        assert_eq!(control.window_days, 25.0);
        assert_eq!(control.profitable, 1);
    }

    #[test]
    fn splits_by_month() {
        let months: BTreeSet<i64> = [1, 2, 3, 4, 5].into();
        let s = split_months(&months, 1, 1);
        assert_eq!(s[&5], Split::Test);
        assert_eq!(s[&4], Split::Validation);
        assert_eq!(s[&1], Split::Train);
        let one: BTreeSet<i64> = [7].into();
        assert_eq!(split_months(&one, 1, 1)[&7], Split::Test);
    }

    #[test]
    fn median_threshold_binarizes() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut []), 0.0);
    }
}
