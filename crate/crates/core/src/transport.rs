//! Links between the coordinator and its workers.
//!
//! Both backends move encoded frames: in-process channels carry the same
//! bytes a socket would. The record/replay wrappers capture the order in
//! which messages are observed and reproduce it on a later run.

use std::collections::VecDeque;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender, TryRecvError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proto::{decode, encode, read_frame, write_frame, DecodeError, FrameError, Message};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("worker {0} disconnected")]
    WorkerGone(usize),
    #[error("coordinator disconnected")]
    CoordinatorGone,
    #[error("no worker {0}")]
    NoSuchWorker(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("frame from worker {worker}: {source}")]
    Frame { worker: usize, source: FrameError },
    #[error("replay diverged from recorded schedule: {0}")]
    Schedule(String),
}

pub trait CoordinatorLink {
    fn workers(&self) -> usize;
    fn send(&mut self, worker: usize, m: &Message) -> Result<(), TransportError>;
    /// Next message from any worker, or `None` once `timeout` elapses.
    fn recv(&mut self, timeout: Duration) -> Result<Option<(usize, Message)>, TransportError>;
}

pub trait WorkerLink {
    fn send(&mut self, m: &Message) -> Result<(), TransportError>;
    /// Blocks until the coordinator sends something.
    fn recv(&mut self) -> Result<Message, TransportError>;
    fn try_recv(&mut self) -> Result<Option<Message>, TransportError>;
}

enum Inbound {
    Frame(Vec<u8>),
    Decoded(Message),
    Closed,
    Failed(FrameError),
}

fn inbound(w: usize, i: Inbound) -> Result<(usize, Message), TransportError> {
    match i {
        Inbound::Frame(bytes) => Ok((w, decode(&bytes)?)),
        Inbound::Decoded(m) => Ok((w, m)),
        Inbound::Closed => Err(TransportError::WorkerGone(w)),
        Inbound::Failed(source) => Err(TransportError::Frame { worker: w, source }),
    }
}

fn recv_inbound(
    rx: &Receiver<(usize, Inbound)>,
    timeout: Duration,
) -> Result<Option<(usize, Message)>, TransportError> {
    match rx.recv_timeout(timeout) {
        Ok((w, i)) => inbound(w, i).map(Some),
        Err(RecvTimeoutError::Timeout) => Ok(None),
        // every worker handle is gone without saying so
        Err(RecvTimeoutError::Disconnected) => Err(TransportError::WorkerGone(usize::MAX)),
    }
}

pub struct ChannelCoordinator {
    to_workers: Vec<Sender<Vec<u8>>>,
    rx: Receiver<(usize, Inbound)>,
}

pub struct ChannelWorker {
    id: usize,
    tx: Sender<(usize, Inbound)>,
    rx: Receiver<Vec<u8>>,
}

/// In-process links for `n` workers.
pub fn channel_links(n: usize) -> (ChannelCoordinator, Vec<ChannelWorker>) {
    let (tx, rx) = unbounded();
    let mut to_workers = Vec::with_capacity(n);
    let mut workers = Vec::with_capacity(n);
    for id in 0..n {
        let (wtx, wrx) = unbounded();
        to_workers.push(wtx);
        workers.push(ChannelWorker {
            id,
            tx: tx.clone(),
            rx: wrx,
        });
    }
    (ChannelCoordinator { to_workers, rx }, workers)
}

impl CoordinatorLink for ChannelCoordinator {
    fn workers(&self) -> usize {
        self.to_workers.len()
    }

    fn send(&mut self, worker: usize, m: &Message) -> Result<(), TransportError> {
        let tx = self
            .to_workers
            .get(worker)
            .ok_or(TransportError::NoSuchWorker(worker))?;
        tx.send(encode(m))
            .map_err(|_| TransportError::WorkerGone(worker))
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<(usize, Message)>, TransportError> {
        recv_inbound(&self.rx, timeout)
    }
}

impl ChannelWorker {
    pub fn id(&self) -> usize {
        self.id
    }
}

impl WorkerLink for ChannelWorker {
    fn send(&mut self, m: &Message) -> Result<(), TransportError> {
        self.tx
            .send((self.id, Inbound::Frame(encode(m))))
            .map_err(|_| TransportError::CoordinatorGone)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let bytes = self
            .rx
            .recv()
            .map_err(|_| TransportError::CoordinatorGone)?;
        Ok(decode(&bytes)?)
    }

    fn try_recv(&mut self) -> Result<Option<Message>, TransportError> {
        match self.rx.try_recv() {
            Ok(bytes) => Ok(Some(decode(&bytes)?)),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(TransportError::CoordinatorGone),
        }
    }
}

impl Drop for ChannelWorker {
    fn drop(&mut self) {
        let _ = self.tx.send((self.id, Inbound::Closed));
    }
}

pub struct TcpCoordinator {
    writers: Vec<BufWriter<TcpStream>>,
    rx: Receiver<(usize, Inbound)>,
}

/// Accepts `n` workers on `listener`; worker ids follow accept order.
pub fn tcp_accept(listener: &TcpListener, n: usize) -> Result<TcpCoordinator, TransportError> {
    let (tx, rx) = unbounded();
    let mut writers = Vec::with_capacity(n);
    for id in 0..n {
        let (stream, _) = listener.accept()?;
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let tx = tx.clone();
        thread::spawn(move || loop {
            let item = match read_frame(&mut reader) {
                Ok(Some(m)) => Inbound::Decoded(m),
                Ok(None) => Inbound::Closed,
                Err(e) => Inbound::Failed(e),
            };
            let last = !matches!(item, Inbound::Decoded(_));
            if tx.send((id, item)).is_err() || last {
                return;
            }
        });
        writers.push(BufWriter::new(stream));
    }
    Ok(TcpCoordinator { writers, rx })
}

impl CoordinatorLink for TcpCoordinator {
    fn workers(&self) -> usize {
        self.writers.len()
    }

    fn send(&mut self, worker: usize, m: &Message) -> Result<(), TransportError> {
        let w = self
            .writers
            .get_mut(worker)
            .ok_or(TransportError::NoSuchWorker(worker))?;
        write_frame(w, m).map_err(|_| TransportError::WorkerGone(worker))
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<(usize, Message)>, TransportError> {
        recv_inbound(&self.rx, timeout)
    }
}

impl Drop for TcpCoordinator {
    fn drop(&mut self) {
        for w in &mut self.writers {
            let _ = w.flush();
            let _ = w.get_ref().shutdown(Shutdown::Both);
        }
    }
}

pub struct TcpWorker {
    writer: BufWriter<TcpStream>,
    rx: Receiver<Result<Message, FrameError>>,
}

pub fn tcp_connect(addr: impl ToSocketAddrs) -> Result<TcpWorker, TransportError> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let (tx, rx) = unbounded();
    thread::spawn(move || loop {
        match read_frame(&mut reader) {
            Ok(Some(m)) => {
                if tx.send(Ok(m)).is_err() {
                    return;
                }
            }
            Ok(None) => return,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        }
    });
    Ok(TcpWorker {
        writer: BufWriter::new(stream),
        rx,
    })
}

impl TcpWorker {
    fn lift(r: Result<Message, FrameError>) -> Result<Message, TransportError> {
        r.map_err(|e| match e {
            FrameError::Decode(d) => TransportError::Decode(d),
            FrameError::Io(io) => TransportError::Io(io),
            e @ FrameError::TooLarge(_) => TransportError::Io(io::Error::other(e)),
        })
    }
}

impl WorkerLink for TcpWorker {
    fn send(&mut self, m: &Message) -> Result<(), TransportError> {
        write_frame(&mut self.writer, m).map_err(|_| TransportError::CoordinatorGone)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let r = self
            .rx
            .recv()
            .map_err(|_| TransportError::CoordinatorGone)?;
        Self::lift(r)
    }

    fn try_recv(&mut self) -> Result<Option<Message>, TransportError> {
        match self.rx.try_recv() {
            Ok(r) => Self::lift(r).map(Some),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(TransportError::CoordinatorGone),
        }
    }
}

impl Drop for TcpWorker {
    fn drop(&mut self) {
        let _ = self.writer.flush();
        let _ = self.writer.get_ref().shutdown(Shutdown::Both);
    }
}

/// What the coordinator observed on each `recv` call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordEvent {
    Recv(usize),
    Tick,
}

/// Message observation order of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub coordinator: Vec<CoordEvent>,
    /// Per worker, the poll indices at which a message was delivered.
    pub workers: Vec<Vec<u64>>,
}

pub struct RecordingCoordinator<L> {
    inner: L,
    log: Vec<CoordEvent>,
}

impl<L: CoordinatorLink> RecordingCoordinator<L> {
    pub fn new(inner: L) -> Self {
        RecordingCoordinator {
            inner,
            log: Vec::new(),
        }
    }

    pub fn into_log(self) -> Vec<CoordEvent> {
        self.log
    }
}

impl<L: CoordinatorLink> CoordinatorLink for RecordingCoordinator<L> {
    fn workers(&self) -> usize {
        self.inner.workers()
    }

    fn send(&mut self, worker: usize, m: &Message) -> Result<(), TransportError> {
        self.inner.send(worker, m)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<(usize, Message)>, TransportError> {
        let r = self.inner.recv(timeout)?;
        self.log.push(match &r {
            Some((w, _)) => CoordEvent::Recv(*w),
            None => CoordEvent::Tick,
        });
        Ok(r)
    }
}

/// Replays a recorded coordinator order: a recorded tick returns at once,
/// a recorded receive waits for that particular worker.
pub struct ReplayCoordinator<L> {
    inner: L,
    events: VecDeque<CoordEvent>,
    held: Vec<VecDeque<Message>>,
    patience: Duration,
}

impl<L: CoordinatorLink> ReplayCoordinator<L> {
    /// `patience` bounds the wait for a recorded message before the replay
    /// is declared diverged.
    pub fn new(inner: L, events: Vec<CoordEvent>, patience: Duration) -> Self {
        let n = inner.workers();
        ReplayCoordinator {
            inner,
            events: events.into(),
            held: vec![VecDeque::new(); n],
            patience,
        }
    }
}

impl<L: CoordinatorLink> CoordinatorLink for ReplayCoordinator<L> {
    fn workers(&self) -> usize {
        self.inner.workers()
    }

    fn send(&mut self, worker: usize, m: &Message) -> Result<(), TransportError> {
        self.inner.send(worker, m)
    }

    fn recv(&mut self, _timeout: Duration) -> Result<Option<(usize, Message)>, TransportError> {
        let want = match self.events.pop_front() {
            Some(CoordEvent::Tick) => return Ok(None),
            Some(CoordEvent::Recv(w)) => w,
            None => return Err(TransportError::Schedule("coordinator log exhausted".into())),
        };
        let deadline = Instant::now() + self.patience;
        loop {
            if let Some(m) = self.held.get_mut(want).and_then(VecDeque::pop_front) {
                return Ok(Some((want, m)));
            }
            let left = deadline.saturating_duration_since(Instant::now());
            match self.inner.recv(left)? {
                Some((w, m)) if w < self.held.len() => self.held[w].push_back(m),
                Some((w, _)) => return Err(TransportError::NoSuchWorker(w)),
                None => {
                    return Err(TransportError::Schedule(format!(
                        "no message from worker {want} within {:?}",
                        self.patience
                    )))
                }
            }
        }
    }
}

pub struct RecordingWorker<L> {
    inner: L,
    polls: u64,
    log: Vec<u64>,
}

impl<L: WorkerLink> RecordingWorker<L> {
    pub fn new(inner: L) -> Self {
        RecordingWorker {
            inner,
            polls: 0,
            log: Vec::new(),
        }
    }

    pub fn into_log(self) -> Vec<u64> {
        self.log
    }
}

impl<L: WorkerLink> WorkerLink for RecordingWorker<L> {
    fn send(&mut self, m: &Message) -> Result<(), TransportError> {
        self.inner.send(m)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let m = self.inner.recv()?;
        self.log.push(self.polls);
        self.polls += 1;
        Ok(m)
    }

    fn try_recv(&mut self) -> Result<Option<Message>, TransportError> {
        let m = self.inner.try_recv()?;
        if m.is_some() {
            self.log.push(self.polls);
        }
        self.polls += 1;
        Ok(m)
    }
}

/// Delivers messages to a worker at exactly the recorded poll indices.
pub struct ReplayWorker<L> {
    inner: L,
    polls: u64,
    due: VecDeque<u64>,
}

impl<L: WorkerLink> ReplayWorker<L> {
    pub fn new(inner: L, due: Vec<u64>) -> Self {
        ReplayWorker {
            inner,
            polls: 0,
            due: due.into(),
        }
    }
}

impl<L: WorkerLink> WorkerLink for ReplayWorker<L> {
    fn send(&mut self, m: &Message) -> Result<(), TransportError> {
        self.inner.send(m)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let p = self.polls;
        self.polls += 1;
        if self.due.pop_front() != Some(p) {
            return Err(TransportError::Schedule(format!(
                "worker blocked at poll {p}, which the recording did not"
            )));
        }
        self.inner.recv()
    }

    fn try_recv(&mut self) -> Result<Option<Message>, TransportError> {
        let p = self.polls;
        self.polls += 1;
        if self.due.front() == Some(&p) {
            self.due.pop_front();
            return self.inner.recv().map(Some);
        }
        Ok(None)
    }
}

impl<L: CoordinatorLink + ?Sized> CoordinatorLink for Box<L> {
    fn workers(&self) -> usize {
        (**self).workers()
    }

    fn send(&mut self, worker: usize, m: &Message) -> Result<(), TransportError> {
        (**self).send(worker, m)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<(usize, Message)>, TransportError> {
        (**self).recv(timeout)
    }
}

impl<L: WorkerLink + ?Sized> WorkerLink for Box<L> {
    fn send(&mut self, m: &Message) -> Result<(), TransportError> {
        (**self).send(m)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        (**self).recv()
    }

    fn try_recv(&mut self) -> Result<Option<Message>, TransportError> {
        (**self).try_recv()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: Duration = Duration::from_millis(500);

    #[test]
    fn channel_roundtrip() {
        let (mut c, mut ws) = channel_links(2);
        c.send(1, &Message::ProvideWork).unwrap();
        assert_eq!(ws[0].try_recv().unwrap(), None);
        assert_eq!(ws[1].recv().unwrap(), Message::ProvideWork);
        ws[0].send(&Message::NoWork).unwrap();
        assert_eq!(c.recv(T).unwrap(), Some((0, Message::NoWork)));
        assert_eq!(c.recv(Duration::from_millis(1)).unwrap(), None);
        assert!(matches!(
            c.send(5, &Message::NoWork),
            Err(TransportError::NoSuchWorker(5))
        ));
    }

    #[test]
    fn dropped_worker_is_reported() {
        let (mut c, mut ws) = channel_links(1);
        drop(ws.pop());
        assert!(matches!(c.recv(T), Err(TransportError::WorkerGone(0))));
    }

    #[test]
    fn dropped_coordinator_is_reported() {
        let (c, mut ws) = channel_links(1);
        drop(c);
        assert!(matches!(ws[0].recv(), Err(TransportError::CoordinatorGone)));
    }

    #[test]
    fn tcp_roundtrip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = thread::spawn(move || {
            let mut w = tcp_connect(addr).unwrap();
            let m = w.recv().unwrap();
            w.send(&Message::NoWork).unwrap();
            m
        });
        let mut c = tcp_accept(&listener, 1).unwrap();
        c.send(0, &Message::Terminate).unwrap();
        assert_eq!(
            c.recv(Duration::from_secs(5)).unwrap(),
            Some((0, Message::NoWork))
        );
        assert_eq!(h.join().unwrap(), Message::Terminate);
        assert!(matches!(
            c.recv(Duration::from_secs(5)),
            Err(TransportError::WorkerGone(0))
        ));
    }

    #[test]
    fn replay_reorders_to_recorded_schedule() {
        let (c, mut ws) = channel_links(2);
        ws[1].send(&Message::NoWork).unwrap();
        ws[0].send(&Message::ProvideWork).unwrap();
        let mut c = ReplayCoordinator::new(
            c,
            vec![CoordEvent::Tick, CoordEvent::Recv(0), CoordEvent::Recv(1)],
            T,
        );
        assert_eq!(c.recv(T).unwrap(), None);
        assert_eq!(c.recv(T).unwrap(), Some((0, Message::ProvideWork)));
        assert_eq!(c.recv(T).unwrap(), Some((1, Message::NoWork)));
        assert!(matches!(c.recv(T), Err(TransportError::Schedule(_))));
    }

    #[test]
    fn worker_replay_delivers_at_recorded_polls() {
        let (mut c, ws) = channel_links(1);
        let w = ws.into_iter().next().unwrap();
        let mut rec = RecordingWorker::new(w);
        assert_eq!(rec.try_recv().unwrap(), None);
        c.send(0, &Message::ProvideWork).unwrap();
        assert_eq!(rec.try_recv().unwrap(), Some(Message::ProvideWork));
        c.send(0, &Message::Terminate).unwrap();
        assert_eq!(rec.recv().unwrap(), Message::Terminate);
        let log = rec.into_log();
        assert_eq!(log, vec![1, 2]);

        let (mut c, ws) = channel_links(1);
        c.send(0, &Message::ProvideWork).unwrap();
        c.send(0, &Message::Terminate).unwrap();
        let mut rep = ReplayWorker::new(ws.into_iter().next().unwrap(), log);
        // the message is already queued but poll 0 was empty when recorded
        assert_eq!(rep.try_recv().unwrap(), None);
        assert_eq!(rep.try_recv().unwrap(), Some(Message::ProvideWork));
        assert_eq!(rep.recv().unwrap(), Message::Terminate);
    }
}
