use std::sync::Mutex;

use thiserror::Error;

use super::NotificationRecord;

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("push target unavailable: {0}")]
    Unavailable(String),
    #[error("push target rejected the notification: {0}")]
    Rejected(String),
}

/// Delivery target for fired notifications.
pub trait NotificationSink: Send + Sync {
    fn deliver(&self, user_id: &str, record: &NotificationRecord) -> Result<(), SinkError>;
}

/// Writes each notification to stdout; used by the CLI and local runs.
#[derive(Debug, Default)]
pub struct ConsoleSink;

impl NotificationSink for ConsoleSink {
    fn deliver(&self, user_id: &str, record: &NotificationRecord) -> Result<(), SinkError> {
        println!(
            "[notify {user_id} {} {}] {}",
            record.slot.fire_at.format("%Y-%m-%d %H:%M"),
            record.content_class,
            record.text
        );
        Ok(())
    }
}

/// Keeps delivered notifications in memory for inspection.
#[derive(Debug, Default)]
pub struct MemorySink {
    delivered: Mutex<Vec<(String, NotificationRecord)>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn delivered(&self) -> Vec<(String, NotificationRecord)> {
        self.delivered
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }
}

impl NotificationSink for MemorySink {
    fn deliver(&self, user_id: &str, record: &NotificationRecord) -> Result<(), SinkError> {
        self.delivered
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push((user_id.to_string(), record.clone()));
        Ok(())
    }
}
