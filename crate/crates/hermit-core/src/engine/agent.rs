use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::Mutex;

use super::Engine;
use crate::trs::ReorgStats;

/// Background thread that periodically drains reorganization queues.
pub struct ReorgAgent {
    stop: Arc<AtomicBool>,
    totals: Arc<Mutex<ReorgStats>>,
    handle: Option<JoinHandle<()>>,
}

impl ReorgAgent {
    pub fn spawn(engine: Arc<Engine>, interval: Duration, batch_limit: usize) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let totals = Arc::new(Mutex::new(ReorgStats::default()));
        let handle = {
            let (stop, totals) = (stop.clone(), totals.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::Acquire) {
                    if let Ok(s) = engine.reorganize(batch_limit) {
                        totals.lock().merge(&s);
                    }
                    std::thread::park_timeout(interval);
                }
            })
        };
        ReorgAgent {
            stop,
            totals,
            handle: Some(handle),
        }
    }

    pub fn totals(&self) -> ReorgStats {
        *self.totals.lock()
    }

    /// Stops the thread after its current pass and returns the totals.
    pub fn stop(mut self) -> ReorgStats {
        self.shutdown();
        self.totals()
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.handle.take() {
            h.thread().unpark();
            let _ = h.join();
        }
    }
}

impl Drop for ReorgAgent {
    fn drop(&mut self) {
        self.shutdown();
    }
}
