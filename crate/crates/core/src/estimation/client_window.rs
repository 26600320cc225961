use serde::{Deserialize, Serialize};

use crate::NORMALIZATION_MSS;

/// Receive window a client operating system advertises by default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientWindowEntry {
    pub os_name: String,
    pub rwin: u32,
    /// Shift count, i.e. the window is multiplied by `2^window_scale`.
    pub window_scale: u8,
    pub window_bytes: u64,
    pub window_segments: u64,
}

impl ClientWindowEntry {
    pub fn new(os_name: impl Into<String>, rwin: u32, window_scale: u8) -> Self {
        let window_bytes = u64::from(rwin) << window_scale;
        ClientWindowEntry {
            os_name: os_name.into(),
            rwin,
            window_scale,
            window_bytes,
            window_segments: window_bytes / NORMALIZATION_MSS,
        }
    }
}

const CLIENT_WINDOWS: [(&str, u32, u8); 8] = [
    ("Linux 4.4", 58, 9),
    ("Android 6.0 (Linux 3.4)", 685, 7),
    ("Android 7.0 (Linux 3.18)", 641, 7),
    ("iOS 11.2.5", 2058, 6),
    ("Mac OS 10.9.5", 8235, 4),
    ("Mac OS 10.13.2", 4117, 5),
    ("Windows 7 (SP 1)", 256, 8),
    ("Windows 8.1 / 10", 1024, 8),
];

/// Default receive windows of common client systems.
pub fn client_windows() -> Vec<ClientWindowEntry> {
    CLIENT_WINDOWS
        .iter()
        .map(|&(name, rwin, ws)| ClientWindowEntry::new(name, rwin, ws))
        .collect()
}

pub fn client_window(os_name: &str) -> Option<ClientWindowEntry> {
    client_windows().into_iter().find(|e| e.os_name == os_name)
}

/// Bytes the server can put in flight before the first ACK.
pub fn effective_first_flight(server_iw_bytes: u64, client: &ClientWindowEntry) -> u64 {
    server_iw_bytes.min(client.window_bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_values() {
        // (window bytes, full segments) as printed for each system
        let printed = [
            (29696, 20),
            (87680, 60),
            (82048, 56),
            (131712, 90),
            (131760, 90),
            (131744, 90),
            (65536, 44),
            (262144, 179),
        ];
        let table = client_windows();
        assert_eq!(table.len(), printed.len());
        for (entry, &(bytes, segs)) in table.iter().zip(&printed) {
            assert_eq!(
                entry.window_bytes,
                u64::from(entry.rwin) * (1 << entry.window_scale)
            );
            assert_eq!(
                (entry.window_bytes, entry.window_segments),
                (bytes, segs),
                "{}",
                entry.os_name
            );
        }
    }

    #[test]
    fn capping_examples() {
        let linux = client_window("Linux 4.4").unwrap();
        let windows = client_window("Windows 8.1 / 10").unwrap();
        assert_eq!(effective_first_flight(46720, &linux), 29696);
        assert_eq!(
            effective_first_flight(46720, &linux) / NORMALIZATION_MSS,
            20
        );
        assert_eq!(effective_first_flight(46720, &windows), 46720);
        assert_eq!(effective_first_flight(29696, &linux), 29696);
    }

    proptest! {
        #[test]
        fn capping_is_min_and_idempotent(iw in 1u64..1_000_000, rwin in 1u32..65536, ws in 0u8..15) {
            let client = ClientWindowEntry::new("x", rwin, ws);
            let once = effective_first_flight(iw, &client);
            prop_assert_eq!(once, iw.min(client.window_bytes));
            prop_assert_eq!(effective_first_flight(once, &client), once);
            let swapped = ClientWindowEntry { window_bytes: iw, ..client.clone() };
            prop_assert_eq!(effective_first_flight(client.window_bytes, &swapped), once);
        }
    }
}
