use super::RuntimeError;

/// Contiguous DRAM region in words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferHandle {
    pub base: u64,
    pub len: u64,
}

impl BufferHandle {
    pub fn end(&self) -> u64 {
        self.base + self.len
    }

    pub fn overlaps(&self, other: &BufferHandle) -> bool {
        self.base < other.end() && other.base < self.end()
    }
}

/// Bump allocator over `[0, capacity)`.
#[derive(Debug, Clone)]
pub struct Allocator {
    next: u64,
    capacity: u64,
}

impl Allocator {
    pub fn new(capacity: u64) -> Self {
        Self { next: 0, capacity }
    }

    pub fn alloc(&mut self, size: u64) -> Result<BufferHandle, RuntimeError> {
        if size == 0 {
            return Err(RuntimeError::Alloc("zero-sized allocation".into()));
        }
        let end = self
            .next
            .checked_add(size)
            .filter(|&e| e <= self.capacity)
            .ok_or_else(|| {
                RuntimeError::Alloc(format!(
                    "{size} words requested, {} of {} free",
                    self.capacity - self.next,
                    self.capacity
                ))
            })?;
        let h = BufferHandle {
            base: self.next,
            len: size,
        };
        self.next = end;
        Ok(h)
    }

    pub fn used(&self) -> u64 {
        self.next
    }

    /// Releases every allocation.
    pub fn reset(&mut self) {
        self.next = 0;
    }
}
