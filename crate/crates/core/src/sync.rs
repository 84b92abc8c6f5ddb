//! Single-writer publication cell.
//!
//! The controller (writer) swaps in a fresh value; the operator (reader)
//! loads it per decision. Readers may observe a value one event late but
//! never a torn one.

use std::sync::{Arc, RwLock};

#[derive(Debug)]
pub struct Shared<T> {
    inner: RwLock<Arc<T>>,
}

impl<T> Shared<T> {
    pub fn new(value: T) -> Self {
        Shared {
            inner: RwLock::new(Arc::new(value)),
        }
    }

    pub fn load(&self) -> Arc<T> {
        self.inner
            .read()
            .expect("publication lock poisoned")
            .clone()
    }

    pub fn store(&self, value: T) {
        self.store_arc(Arc::new(value));
    }

    pub fn store_arc(&self, value: Arc<T>) {
        *self.inner.write().expect("publication lock poisoned") = value;
    }
}

impl<T: Default> Default for Shared<T> {
    fn default() -> Self {
        Shared::new(T::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_is_visible_to_readers() {
        let cell = Shared::new(1u32);
        let a = cell.load();
        cell.store(2);
        assert_eq!(*a, 1);
        assert_eq!(*cell.load(), 2);
    }
}
