//! Sample collector: the single writer of aggregated run state.
//!
//! Tenant actors stream completed samples through one channel; the
//! collector thread accumulates them and hands the pile back when every
//! sender is gone.

use crossbeam_channel::{unbounded, Sender};

use crate::probe::LatencySample;

pub struct Collector {
    pub tx: Sender<LatencySample>,
    thread: std::thread::JoinHandle<Vec<LatencySample>>,
}

impl Collector {
    pub fn spawn() -> Collector {
        let (tx, rx) = unbounded::<LatencySample>();
        let thread = std::thread::Builder::new()
            .name("collector".into())
            .spawn(move || {
                let mut samples = Vec::new();
                while let Ok(s) = rx.recv() {
                    samples.push(s);
                }
                samples
            })
            .expect("spawn collector");
        Collector { tx, thread }
    }

    /// Drops the local sender and waits for the remaining producers to
    /// finish, returning everything collected.
    pub fn finish(self) -> Vec<LatencySample> {
        drop(self.tx);
        self.thread.join().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::MsgKind;

    #[test]
    fn collects_until_senders_drop() {
        let collector = Collector::spawn();
        let tx2 = collector.tx.clone();
        let t = std::thread::spawn(move || {
            for seq in 0..100 {
                tx2.send(LatencySample {
                    run_id: 1,
                    tenant_id: 2,
                    seq,
                    msg_type: MsgKind::PacketIn,
                    send_ts: seq * 10,
                    recv_ts: seq * 10 + 5,
                })
                .unwrap();
            }
        });
        t.join().unwrap();
        let samples = collector.finish();
        assert_eq!(samples.len(), 100);
    }
}
