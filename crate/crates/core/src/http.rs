//! Blocking JSON-over-HTTP plumbing shared by the remote oracle and encoder.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Counting gate that bounds concurrent in-flight requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a InFlightLimiter);

impl InFlightLimiter {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().expect("limiter poisoned");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("limiter poisoned");
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().expect("limiter poisoned");
        *active -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub struct JsonClient {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
    limiter: InFlightLimiter,
}

impl JsonClient {
    pub fn new(endpoint: &str, token: Option<String>, timeout: Duration, max_in_flight: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            endpoint: endpoint.to_string(),
            token,
            limiter: InFlightLimiter::new(max_in_flight),
        }
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, String> {
        let _permit = self.limiter.acquire();
        let mut request = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| e.to_string())?;
        response.body_mut().read_json::<Resp>().map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn limiter_bounds_concurrency() {
        let limiter = Arc::new(InFlightLimiter::new(2));
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (limiter, current, peak) = (limiter.clone(), current.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = limiter.acquire();
                    let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(10));
                    current.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
