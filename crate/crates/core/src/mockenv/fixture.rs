//! Seeded mailbox fixtures for the attachment-archival scenario.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::world::{Attachment, MailMessage, WorldState};

/// Length of the lookback window the scenario filters on.
pub const WINDOW_DAYS: i64 = 15;
/// Sender domain treated as internal.
pub const INTERNAL_DOMAIN: &str = "agentr.dev";

/// Simulated "now" of every fixture: mid-December, so folder names carry
/// the month "December".
pub fn fixture_now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 12, 16, 12, 0, 0).unwrap()
}

fn at(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, mo, d, h, mi, s).unwrap()
}

fn body_for(filename: &str, sender: &str, salt: u64) -> Vec<u8> {
    let lower = filename.to_lowercase();
    let magic: &[u8] = if lower.ends_with(".pdf") {
        b"%PDF-1.7\n"
    } else if lower.ends_with(".xlsx") {
        b"PK\x03\x04"
    } else if lower.ends_with(".png") {
        b"\x89PNG\r\n\x1a\n"
    } else {
        b""
    };
    let mut bytes = magic.to_vec();
    bytes.extend_from_slice(format!("{filename} from {sender} #{salt}\n").as_bytes());
    bytes
}

struct Draft<'a> {
    sender: &'a str,
    subject: &'a str,
    received_at: DateTime<Utc>,
    files: &'a [&'a str],
}

fn materialize(drafts: Vec<Draft<'_>>, salt: u64) -> Vec<MailMessage> {
    drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let message_id = format!("m{:02}", i + 1);
            let attachments = d
                .files
                .iter()
                .enumerate()
                .map(|(j, f)| Attachment {
                    attachment_id: format!("a{}", j + 1),
                    filename: (*f).to_owned(),
                    content: body_for(f, d.sender, salt.wrapping_mul(1000) + (i * 10 + j) as u64),
                })
                .collect();
            MailMessage {
                message_id,
                sender_address: d.sender.to_owned(),
                subject: d.subject.to_owned(),
                received_at: d.received_at,
                attachments,
            }
        })
        .collect()
}

/// The hand-authored acceptance mailbox.
///
/// Within the 15-day window exactly seven messages carry attachments, all from
/// external senders and each with one `.pdf` or `.xlsx` file (two also carry a
/// `.png` that must be skipped). Internal senders, stale messages and an
/// image-only message sit outside that set. One message lands exactly on the
/// window boundary and one a second before it.
fn canonical() -> WorldState {
    let drafts = vec![
        Draft {
            sender: "jane@acme-corp.com",
            subject: "December invoice",
            received_at: at(2024, 12, 3, 9, 15, 0),
            files: &["Invoice #7.pdf", "logo.png"],
        },
        Draft {
            sender: "billing@globex.com",
            subject: "Q4 statement",
            received_at: at(2024, 12, 1, 12, 0, 0),
            files: &["Q4 Statement.xlsx"],
        },
        Draft {
            sender: "raj@initech.co.uk",
            subject: "Signed contract",
            received_at: at(2024, 12, 9, 14, 30, 0),
            files: &["Contract.pdf"],
        },
        Draft {
            sender: "jane@acme-corp.com",
            subject: "Revised invoice",
            received_at: at(2024, 12, 10, 8, 0, 0),
            files: &["Invoice #7.pdf"],
        },
        Draft {
            sender: "ap@acme-corp.com",
            subject: "Invoice copy for AP",
            received_at: at(2024, 12, 10, 16, 45, 0),
            files: &["Invoice #7.pdf"],
        },
        Draft {
            sender: "ops@globex.com",
            subject: "Inventory export",
            received_at: at(2024, 12, 12, 11, 5, 0),
            files: &["Inventory.XLSX", "chart.png"],
        },
        Draft {
            sender: "li@umbrella-group.org",
            subject: "Audit report",
            received_at: at(2024, 12, 14, 17, 20, 0),
            files: &["Audit Report.pdf"],
        },
        Draft {
            sender: "team@agentr.dev",
            subject: "Standup notes",
            received_at: at(2024, 12, 11, 10, 0, 0),
            files: &[],
        },
        Draft {
            sender: "ceo@agentr.dev",
            subject: "All hands",
            received_at: at(2024, 12, 13, 15, 0, 0),
            files: &[],
        },
        Draft {
            sender: "hr@agentr.dev",
            subject: "Payroll",
            received_at: at(2024, 11, 20, 9, 0, 0),
            files: &["Payroll.pdf"],
        },
        Draft {
            sender: "jane@acme-corp.com",
            subject: "Old invoice",
            received_at: at(2024, 11, 25, 9, 0, 0),
            files: &["Invoice #3.pdf"],
        },
        Draft {
            sender: "sales@globex.com",
            subject: "Quote",
            received_at: at(2024, 12, 1, 11, 59, 59),
            files: &["Quote.pdf"],
        },
        Draft {
            sender: "design@initech.co.uk",
            subject: "Mockups",
            received_at: at(2024, 11, 28, 13, 0, 0),
            files: &["mockup.png"],
        },
        Draft {
            sender: "news@globex.com",
            subject: "Newsletter",
            received_at: at(2024, 12, 15, 7, 0, 0),
            files: &[],
        },
    ];
    WorldState {
        mailbox: materialize(drafts, 0),
        ..WorldState::empty(fixture_now())
    }
}

const EXTERNAL_SENDERS: &[&str] = &[
    "jane@acme-corp.com",
    "billing@globex.com",
    "raj@initech.co.uk",
    "li@umbrella-group.org",
    "tony@stark_industries.net",
    "bruce@wayne-enterprises.com",
    "gavin@hooli.io",
    "art@vandelay.co",
];
const STEMS: &[&str] = &[
    "Invoice #7",
    "Statement",
    "Contract",
    "Report Q4",
    "Price list",
    "Purchase order",
    "Timesheet",
];

fn generated(seed: u64) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let now = fixture_now();
    let window = Duration::days(WINDOW_DAYS);
    let in_window =
        |rng: &mut ChaCha8Rng| now - Duration::seconds(rng.gen_range(0..window.num_seconds()));
    let stale =
        |rng: &mut ChaCha8Rng| now - window - Duration::seconds(rng.gen_range(1..30 * 86_400));

    let mut drafts: Vec<(String, String, DateTime<Utc>, Vec<String>)> = Vec::new();
    let mut senders: Vec<&str> = EXTERNAL_SENDERS.to_vec();
    senders.shuffle(&mut rng);
    for i in 0..7 {
        // The first two senders differ so at least two company folders appear.
        let sender = if i < 2 {
            senders[i]
        } else {
            senders[rng.gen_range(0..senders.len())]
        };
        let ext = if rng.gen_bool(0.5) { "pdf" } else { "xlsx" };
        let stem = STEMS[rng.gen_range(0..STEMS.len())];
        let mut files = vec![format!("{stem}.{ext}")];
        if rng.gen_bool(0.3) {
            files.push("signature.png".into());
        }
        drafts.push((
            sender.into(),
            format!("{stem} ({i})"),
            in_window(&mut rng),
            files,
        ));
    }
    for i in 0..rng.gen_range(2..=3) {
        drafts.push((
            format!("staff{i}@{INTERNAL_DOMAIN}"),
            "Internal report".into(),
            in_window(&mut rng),
            vec![format!("Internal {i}.pdf")],
        ));
    }
    for i in 0..2 {
        let sender = senders[rng.gen_range(0..senders.len())];
        drafts.push((
            sender.into(),
            "Archive".into(),
            stale(&mut rng),
            vec![format!("Old {i}.pdf")],
        ));
    }
    for i in 0..rng.gen_range(1..=2) {
        let sender = senders[rng.gen_range(0..senders.len())];
        drafts.push((
            sender.into(),
            "Screenshots".into(),
            in_window(&mut rng),
            vec![format!("shot {i}.png")],
        ));
    }
    drafts.shuffle(&mut rng);
    let file_refs: Vec<Vec<&str>> = drafts
        .iter()
        .map(|d| d.3.iter().map(String::as_str).collect())
        .collect();
    let borrowed: Vec<Draft<'_>> = drafts
        .iter()
        .zip(&file_refs)
        .map(|(d, files)| Draft {
            sender: &d.0,
            subject: &d.1,
            received_at: d.2,
            files,
        })
        .collect();
    WorldState {
        mailbox: materialize(borrowed, seed),
        ..WorldState::empty(now)
    }
}

/// Deterministic fixture for `seed`. Seed 0 is the canonical acceptance
/// mailbox; other seeds add in-window internal mail with PDFs and image-only
/// messages on top of the seven archivable ones.
pub fn build_fixture(seed: u64) -> WorldState {
    if seed == 0 {
        canonical()
    } else {
        generated(seed)
    }
}

/// `n` external in-window messages with one PDF each.
pub fn bulk_fixture(n: usize) -> WorldState {
    let now = fixture_now();
    let mailbox = (0..n)
        .map(|i| {
            let sender = format!("sender{i}@company{}.com", i % 10);
            let filename = format!("Doc {i}.pdf");
            MailMessage {
                message_id: format!("b{i:04}"),
                subject: format!("Bulk {i}"),
                received_at: now - Duration::minutes(i as i64 + 1),
                attachments: vec![Attachment {
                    attachment_id: "a1".into(),
                    content: body_for(&filename, &sender, i as u64),
                    filename,
                }],
                sender_address: sender,
            }
        })
        .collect();
    WorldState {
        mailbox,
        ..WorldState::empty(now)
    }
}
