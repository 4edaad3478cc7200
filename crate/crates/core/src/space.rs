//! The operation set shared by local and remote tuple spaces.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::store::{LocalSpace, Registration, Timeout};
use crate::tuple::{Template, Tuple};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpaceError {
    #[error("timed out waiting for a matching tuple")]
    Timeout,
    #[error("connection lost")]
    ConnectionLost,
    #[error("server is shutting down")]
    ShuttingDown,
    #[error("remote error {code}: {message}")]
    Remote { code: u16, message: String },
    #[error("malformed message: {0}")]
    Malformed(String),
}

impl From<Timeout> for SpaceError {
    fn from(_: Timeout) -> Self {
        SpaceError::Timeout
    }
}

pub type SpaceResult<T> = Result<T, SpaceError>;

/// Receives the result of a [`TupleSpace::watch`]. Called at most once;
/// `Ok(None)` means the watch ended without a tuple (it was cancelled).
pub type Notify = Box<dyn FnOnce(SpaceResult<Option<Tuple>>) + Send>;

/// A pending watch. Cancellation is best effort: the tuple may already be
/// on its way.
pub struct Watch {
    cancel: Option<Box<dyn FnOnce() + Send>>,
}

impl Watch {
    pub fn new(cancel: impl FnOnce() + Send + 'static) -> Watch {
        Watch { cancel: Some(Box::new(cancel)) }
    }

    /// A watch that already completed.
    pub fn done() -> Watch {
        Watch { cancel: None }
    }

    pub fn cancel(mut self) {
        if let Some(f) = self.cancel.take() {
            f();
        }
    }
}

/// Linda operations over a tuple space, local or remote. Timeouts of `None`
/// wait forever.
pub trait TupleSpace: Send + Sync {
    fn out(&self, tuple: Tuple) -> SpaceResult<()>;
    fn rdp(&self, template: &Template) -> SpaceResult<Option<Tuple>>;
    fn inp(&self, template: &Template) -> SpaceResult<Option<Tuple>>;
    fn rd(&self, template: &Template, timeout: Option<Duration>) -> SpaceResult<Tuple>;
    /// Blocking take (Linda `in`).
    fn take(&self, template: &Template, timeout: Option<Duration>) -> SpaceResult<Tuple>;
    fn count(&self, template: &Template) -> SpaceResult<usize>;
    /// Starts a non-blocking, non-destructive wait for a match; `notify`
    /// receives the tuple.
    fn watch(&self, template: &Template, notify: Notify) -> SpaceResult<Watch>;
}

impl TupleSpace for LocalSpace {
    fn out(&self, tuple: Tuple) -> SpaceResult<()> {
        LocalSpace::out(self, tuple);
        Ok(())
    }

    fn rdp(&self, template: &Template) -> SpaceResult<Option<Tuple>> {
        Ok(LocalSpace::rdp(self, template))
    }

    fn inp(&self, template: &Template) -> SpaceResult<Option<Tuple>> {
        Ok(LocalSpace::inp(self, template))
    }

    fn rd(&self, template: &Template, timeout: Option<Duration>) -> SpaceResult<Tuple> {
        Ok(LocalSpace::rd(self, template, timeout)?)
    }

    fn take(&self, template: &Template, timeout: Option<Duration>) -> SpaceResult<Tuple> {
        Ok(LocalSpace::take(self, template, timeout)?)
    }

    fn count(&self, template: &Template) -> SpaceResult<usize> {
        Ok(LocalSpace::count(self, template))
    }

    fn watch(&self, template: &Template, notify: Notify) -> SpaceResult<Watch> {
        let slot = Arc::new(Mutex::new(Some(notify)));
        let fire = move |slot: &Mutex<Option<Notify>>, t: Tuple| {
            if let Some(n) = slot.lock().unwrap().take() {
                n(Ok(Some(t)));
            }
        };
        let waiting = {
            let slot = slot.clone();
            self.register(template, false, Box::new(move |t| fire(&slot, t)))
        };
        match waiting {
            Registration::Ready(t) => {
                fire(&slot, t);
                Ok(Watch::done())
            }
            Registration::Waiting(id) => {
                let space = self.clone();
                Ok(Watch::new(move || {
                    space.cancel(id);
                }))
            }
        }
    }
}

impl<S: TupleSpace + ?Sized> TupleSpace for Arc<S> {
    fn out(&self, tuple: Tuple) -> SpaceResult<()> {
        (**self).out(tuple)
    }

    fn rdp(&self, template: &Template) -> SpaceResult<Option<Tuple>> {
        (**self).rdp(template)
    }

    fn inp(&self, template: &Template) -> SpaceResult<Option<Tuple>> {
        (**self).inp(template)
    }

    fn rd(&self, template: &Template, timeout: Option<Duration>) -> SpaceResult<Tuple> {
        (**self).rd(template, timeout)
    }

    fn take(&self, template: &Template, timeout: Option<Duration>) -> SpaceResult<Tuple> {
        (**self).take(template, timeout)
    }

    fn count(&self, template: &Template) -> SpaceResult<usize> {
        (**self).count(template)
    }

    fn watch(&self, template: &Template, notify: Notify) -> SpaceResult<Watch> {
        (**self).watch(template, notify)
    }
}
