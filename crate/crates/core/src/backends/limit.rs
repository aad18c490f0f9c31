use std::sync::{Arc, Condvar, Mutex};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};

/// Counting semaphore for in-flight request caps.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.permits.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.cv.notify_one();
    }
}

/// Wraps a backend with a per-backend cap and an optional shared global
/// cap.
pub struct Limited {
    inner: Arc<dyn ChatBackend>,
    own: Semaphore,
    global: Option<Arc<Semaphore>>,
}

impl Limited {
    pub fn new(inner: Arc<dyn ChatBackend>, max_in_flight: usize, global: Option<Arc<Semaphore>>) -> Self {
        Self {
            inner,
            own: Semaphore::new(max_in_flight),
            global,
        }
    }
}

impl ChatBackend for Limited {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn supports_vision(&self) -> bool {
        self.inner.supports_vision()
    }

    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let _g = self.global.as_ref().map(|g| g.acquire());
        let _p = self.own.acquire();
        self.inner.send(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    struct Slow {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl ChatBackend for Slow {
        fn id(&self) -> &str {
            "slow"
        }
        fn supports_vision(&self) -> bool {
            false
        }
        fn send(&self, _req: &ChatRequest) -> Result<ChatResponse, BackendError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(ChatResponse {
                text: String::new(),
                latency: Duration::ZERO,
                backend_id: "slow".into(),
                token_usage: None,
            })
        }
    }

    #[test]
    fn caps_in_flight_requests() {
        let slow = Arc::new(Slow {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let limited = Limited::new(slow.clone(), 2, None);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| limited.send(&ChatRequest::new("a", "t", "s", "u")).unwrap());
            }
        });
        assert!(slow.peak.load(Ordering::SeqCst) <= 2);
    }
}
