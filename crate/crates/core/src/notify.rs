//! Recorded notification sink standing in for email/SMS delivery.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub at: u64,
    pub contact: String,
    pub message: String,
}

/// Append-only log of everything the election "sent" to voters.
#[derive(Debug, Default, Clone)]
pub struct NotificationSink {
    entries: Vec<Notification>,
}

impl NotificationSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, at: u64, contact: &str, message: String) {
        self.entries.push(Notification {
            at,
            contact: contact.to_string(),
            message,
        });
    }

    pub fn entries(&self) -> &[Notification] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One line per notification, in emission order.
    pub fn to_log_string(&self) -> String {
        let mut out = String::new();
        for n in &self.entries {
            out.push_str(&format!("at={} contact={} message={}\n", n.at, n.contact, n.message));
        }
        out
    }
}
