//! The operations-center side: persistence of edge messages and reports.

pub mod boxplot;
pub mod report;
pub mod schedule;
pub mod server;
pub mod store;

pub use boxplot::{boxplot, boxplot_stats, BoxplotStats};
pub use report::{daily_report, export, DailyReport, Format, ReportSet};
pub use schedule::{detect_missing_trips, load_schedule, read_schedule, ScheduleEntry, DEFAULT_TOLERANCE_MIN};
pub use server::{HubServer, HubStats};
pub use store::{read_messages, Appended, MessageLog};
