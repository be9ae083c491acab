use driver_wm_core::exec::Lanes;

/// Runs per-clip work on up to `n` scoped threads over contiguous index
/// ranges. Results come back in index order, so every reduction downstream
/// sees the same sequence as with one lane.
#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    n: usize,
}

impl Threaded {
    pub fn new(n: usize) -> Self {
        Self { n: n.max(1) }
    }

    pub fn lanes(&self) -> usize {
        self.n
    }
}

impl Lanes for Threaded {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        if self.n == 1 || n <= 1 {
            return (0..n).map(f).collect();
        }
        let chunk = n.div_ceil(self.n);
        let f = &f;
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .step_by(chunk)
                .map(|start| s.spawn(move || (start..(start + chunk).min(n)).map(f).collect::<Vec<T>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect()
        })
    }
}
