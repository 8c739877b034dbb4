//! WebSocket bridge between the tick loop and a cockpit client.
//!
//! All messages are JSON text frames with a `type` field:
//!
//! * `hello` (both ways): `{"type":"hello","protocol":1,"role":"server","tick_hz":20,"capabilities":["frame","control"]}`.
//!   The server sends one on connect; a client hello is accepted and ignored.
//! * `frame` (server to client), once per tick:
//!   `{"type":"frame","protocol":1,"tick":..,"ego":{..},"vehicles":[{"id","lane","ds","dv","lateral_offset"}],
//!   "events":[{"kind","intention","directions","issued","expires","remaining"}],"predicted":"LCL"|null,"stale":false}`.
//!   `ds` (m) and `dv` (km/h) are relative to the ego; only vehicles within
//!   250 m are listed.
//! * `control` (client to server):
//!   `{"type":"control","steering":-1..1,"throttle":0..1,"brake":0..1,"indicator":0|1|2,"timestamp":ms}`.
//!   Negative steering turns left. Values are clamped on receipt; anything
//!   that does not parse, or an unknown indicator code, is dropped and
//!   counted.
//!
//! Frames go through a four-slot latest-wins queue and controls through a
//! bounded queue drained by the tick loop, so the loop never waits on the
//! network. A new connection replaces the current one.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_queue::ArrayQueue;
use lcassist_core::driver::{EgoController, Observation};
use lcassist_core::session::{Session, TickRecord};
use lcassist_core::sim::policy::MAX_BRAKING;
use lcassist_core::sim::{ControlInput, WorldState, ANGLE_LIMIT};
use lcassist_core::types::Indicator;
use lcassist_core::warning::{DirectionSet, DisplaySet, EventKind, ThresholdTable};
use lcassist_core::{Intention, TICK_HZ, TICK_SECONDS};
use serde::{Deserialize, Serialize};
use tungstenite::{Message as WsMessage, WebSocket};

use crate::error::{Error, Result};
use crate::experiment::{prepare_dir, write_run_outputs, DriverKind, RunKind, RunSpec, EVENT_LOG, RUN_LOG, WORLD_LOG};
use crate::logs::WorldLog;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_PORT: u16 = 8700;
pub const FRAME_QUEUE_CAP: usize = 4;
const CONTROL_QUEUE_CAP: usize = 16;
pub const CONTROL_TIMEOUT: Duration = Duration::from_millis(250);
/// Vehicles farther than this from the ego are left out of frames (m).
pub const VISIBLE_RADIUS: f64 = 250.0;
/// Ego acceleration at full throttle (m/s²).
pub const FULL_THROTTLE: f64 = 4.0;
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello(Hello),
    Frame(Frame),
    Control(ControlMessage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol: u32,
    pub role: String,
    #[serde(default)]
    pub tick_hz: u32,
    #[serde(default)]
    pub capabilities: Vec<String>,
}

impl Hello {
    pub fn server() -> Self {
        Hello {
            protocol: PROTOCOL_VERSION,
            role: "server".into(),
            tick_hz: TICK_HZ,
            capabilities: vec!["frame".into(), "control".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoFrame {
    pub s: f64,
    pub lane: u8,
    pub lateral_offset: f64,
    /// km/h
    pub v: f64,
    pub a: f64,
    pub heading: f64,
    pub steering: f64,
    pub indicator: u8,
    pub gear: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleFrame {
    pub id: u32,
    pub lane: u8,
    /// Longitudinal distance ahead of the ego (m), negative behind.
    pub ds: f64,
    /// Speed relative to the ego (km/h).
    pub dv: f64,
    pub lateral_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFrame {
    pub kind: EventKind,
    pub intention: Intention,
    pub directions: DirectionSet,
    pub issued: u64,
    pub expires: u64,
    pub remaining: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub protocol: u32,
    pub tick: u64,
    pub ego: EgoFrame,
    pub vehicles: Vec<VehicleFrame>,
    pub events: Vec<EventFrame>,
    pub predicted: Option<Intention>,
    pub stale: bool,
}

impl Frame {
    /// Scene part of the frame for the world's current tick.
    pub fn scene(world: &WorldState) -> Option<Frame> {
        let ego = &world.ego()?.state;
        let half = world.road_length() / 2.0;
        let vehicles = world
            .vehicles()
            .iter()
            .filter(|v| !v.is_ego())
            .filter_map(|v| {
                let mut ds = (v.state.s - ego.s).rem_euclid(world.road_length());
                if ds >= half {
                    ds -= world.road_length();
                }
                (ds.abs() <= VISIBLE_RADIUS).then(|| VehicleFrame {
                    id: v.id(),
                    lane: v.state.lane_index,
                    ds,
                    dv: v.state.v - ego.v,
                    lateral_offset: v.state.lateral_offset,
                })
            })
            .collect();
        Some(Frame {
            protocol: PROTOCOL_VERSION,
            tick: world.tick(),
            ego: EgoFrame {
                s: ego.s,
                lane: ego.lane_index,
                lateral_offset: ego.lateral_offset,
                v: ego.v,
                a: ego.a,
                heading: ego.heading,
                steering: ego.steering,
                indicator: ego.indicator.code(),
                gear: ego.gear,
            },
            vehicles,
            events: Vec::new(),
            predicted: None,
            stale: false,
        })
    }

    /// Adds the assistant's output for this tick.
    pub fn with_assist(mut self, display: Option<&DisplaySet>, predicted: Option<Intention>, stale: bool) -> Frame {
        let now = self.tick;
        self.events = display
            .map(|d| {
                d.active()
                    .iter()
                    .filter(|e| e.is_active(now))
                    .map(|e| EventFrame {
                        kind: e.kind,
                        intention: e.intention,
                        directions: e.directions,
                        issued: e.issued_tick,
                        expires: e.expires_tick,
                        remaining: e.remaining(now),
                    })
                    .collect()
            })
            .unwrap_or_default();
        self.predicted = predicted;
        self.stale = stale;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlMessage {
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
    pub indicator: u8,
    /// Client clock (ms); informational.
    #[serde(default)]
    pub timestamp: f64,
}

impl ControlMessage {
    pub fn neutral() -> Self {
        ControlMessage::default()
    }

    pub fn clamped(self) -> Self {
        let c = |x: f64, lo: f64, hi: f64| if x.is_nan() { 0.0 } else { x.clamp(lo, hi) };
        ControlMessage {
            steering: c(self.steering, -1.0, 1.0),
            throttle: c(self.throttle, 0.0, 1.0),
            brake: c(self.brake, 0.0, 1.0),
            indicator: self.indicator.min(2),
            timestamp: self.timestamp,
        }
    }

    /// Simulator controls: full left (-1) is the largest positive wheel
    /// angle, full throttle 4 m/s², full brake 9 m/s².
    pub fn to_input(self) -> ControlInput {
        let m = self.clamped();
        ControlInput {
            steering: -m.steering * ANGLE_LIMIT,
            accel: m.throttle * FULL_THROTTLE - m.brake * MAX_BRAKING,
            indicator: Indicator::from_code(m.indicator as i64).unwrap_or_default(),
        }
        .clamped()
    }
}

/// Parses one client text message. `None` for anything malformed.
pub fn parse_client_message(text: &str) -> Option<Message> {
    match serde_json::from_str::<Message>(text).ok()? {
        Message::Control(c) if c.indicator > 2 => None,
        Message::Control(c) => Some(Message::Control(c.clamped())),
        Message::Frame(_) => None,
        hello => Some(hello),
    }
}

/// Monotonic time source, injectable for tests.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        SystemClock(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.0.elapsed()
    }
}

#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        self.0.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.0.load(Ordering::SeqCst))
    }
}

/// Sample-and-hold with a staleness watchdog.
#[derive(Debug, Clone)]
pub struct ControlLatch {
    last: Option<(ControlMessage, Duration)>,
    timeout: Duration,
}

impl ControlLatch {
    pub fn new(timeout: Duration) -> Self {
        ControlLatch { last: None, timeout }
    }

    pub fn update(&mut self, msg: ControlMessage, at: Duration) {
        self.last = Some((msg.clamped(), at));
    }

    /// Held message, or neutral with the stale flag once nothing arrived
    /// within the timeout.
    pub fn current(&self, now: Duration) -> (ControlMessage, bool) {
        match self.last {
            Some((m, at)) if now.saturating_sub(at) <= self.timeout => (m, false),
            _ => (ControlMessage::neutral(), true),
        }
    }
}

struct Shared {
    frames: ArrayQueue<String>,
    controls: ArrayQueue<(ControlMessage, Duration)>,
    generation: AtomicU64,
    connected: AtomicBool,
    shutdown: AtomicBool,
    malformed: AtomicU64,
    clock: Arc<dyn Clock>,
}

/// Listening bridge. Dropping it stops the network threads.
pub struct Bridge {
    shared: Arc<Shared>,
    addr: SocketAddr,
    accept: Option<JoinHandle<()>>,
}

impl Bridge {
    pub fn bind(addr: impl ToSocketAddrs, clock: Arc<dyn Clock>) -> Result<Bridge> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::Config(format!("cannot bind bridge: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Error::Config(e.to_string()))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::Config(e.to_string()))?;
        let shared = Arc::new(Shared {
            frames: ArrayQueue::new(FRAME_QUEUE_CAP),
            controls: ArrayQueue::new(CONTROL_QUEUE_CAP),
            generation: AtomicU64::new(0),
            connected: AtomicBool::new(false),
            shutdown: AtomicBool::new(false),
            malformed: AtomicU64::new(0),
            clock,
        });
        let s = Arc::clone(&shared);
        let accept = thread::spawn(move || accept_loop(listener, s));
        Ok(Bridge {
            shared,
            addr,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn is_connected(&self) -> bool {
        self.shared.connected.load(Ordering::SeqCst)
    }

    /// Malformed client messages dropped so far.
    pub fn malformed(&self) -> u64 {
        self.shared.malformed.load(Ordering::SeqCst)
    }

    /// Queues a frame for the client, evicting the oldest when full.
    /// Without a client the frame is discarded.
    pub fn publish(&self, frame: &Frame) {
        if !self.is_connected() {
            return;
        }
        let text = serde_json::to_string(&Message::Frame(frame.clone())).expect("frames always serialize");
        self.shared.frames.force_push(text);
    }

    pub fn controller(&self) -> BridgeController {
        BridgeController {
            shared: Arc::clone(&self.shared),
            latch: ControlLatch::new(CONTROL_TIMEOUT),
            indicator: Indicator::Off,
            stale: true,
        }
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let generation = shared.generation.fetch_add(1, Ordering::SeqCst) + 1;
                let s = Arc::clone(&shared);
                thread::spawn(move || {
                    let _ = client_session(stream, &s, generation);
                    if s.generation.load(Ordering::SeqCst) == generation {
                        s.connected.store(false, Ordering::SeqCst);
                    }
                });
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(_) => thread::sleep(Duration::from_millis(10)),
        }
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io)
        if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut))
}

// tungstenite::Error is large, but it only travels one frame up
#[allow(clippy::result_large_err)]
fn client_session(stream: TcpStream, shared: &Shared, generation: u64) -> std::result::Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_mut().set_read_timeout(Some(POLL))?;
    // the new client takes over; frames queued for the old one are dropped
    while shared.frames.pop().is_some() {}
    shared.connected.store(true, Ordering::SeqCst);
    let hello = serde_json::to_string(&Message::Hello(Hello::server())).expect("hello serializes");
    ws.send(WsMessage::text(hello))?;
    loop {
        if shared.shutdown.load(Ordering::SeqCst) || shared.generation.load(Ordering::SeqCst) != generation {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        while let Some(f) = shared.frames.pop() {
            ws.send(WsMessage::text(f))?;
        }
        match ws.read() {
            Ok(WsMessage::Text(t)) => match parse_client_message(&t) {
                Some(Message::Control(c)) => {
                    shared.controls.force_push((c, shared.clock.now()));
                }
                Some(_) => {}
                None => {
                    shared.malformed.fetch_add(1, Ordering::SeqCst);
                }
            },
            Ok(WsMessage::Binary(_)) => {
                shared.malformed.fetch_add(1, Ordering::SeqCst);
            }
            Ok(WsMessage::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
}

/// Ego controller fed by the bridge's control queue.
pub struct BridgeController {
    shared: Arc<Shared>,
    latch: ControlLatch,
    indicator: Indicator,
    stale: bool,
}

impl BridgeController {
    /// Whether the controls of the last tick came from the watchdog.
    pub fn last_stale(&self) -> bool {
        self.stale
    }
}

impl EgoController for BridgeController {
    fn control(&mut self, _obs: &Observation<'_>) -> ControlInput {
        while let Some((msg, at)) = self.shared.controls.pop() {
            self.latch.update(msg, at);
        }
        let (msg, stale) = self.latch.current(self.shared.clock.now());
        self.stale = stale;
        let input = msg.to_input();
        self.indicator = input.indicator;
        input
    }

    /// Human intent is unknown; the indicator stands in for it.
    fn intent(&self) -> Intention {
        self.indicator.side().map_or(Intention::Lk, |s| s.intention())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Pace ticks at 20 Hz wall-clock time.
    pub realtime: bool,
}

#[derive(Debug, Clone)]
pub struct ServeOutcome {
    pub records: Vec<TickRecord>,
    pub stale: Vec<bool>,
    pub frames_published: u64,
    pub malformed: u64,
}

/// Runs the loop with controls from the bridge and a frame per tick.
/// Writes the run outputs into `out` when given.
pub fn serve(spec: &RunSpec, bridge: &Bridge, options: &ServeOptions, out: Option<&Path>) -> Result<ServeOutcome> {
    let ticks = spec.ticks()?;
    let manifest = spec.manifest(RunKind::Serve, DriverKind::Bridge, &[RUN_LOG, EVENT_LOG])?;
    let assistant = spec
        .model
        .as_ref()
        .map(|(_, b)| b.assistant(ThresholdTable::standard()))
        .transpose()?;
    let mut world_log = match (out, spec.world_log) {
        (Some(dir), true) => {
            prepare_dir(dir)?;
            Some(WorldLog::create(&dir.join(WORLD_LOG))?)
        }
        _ => None,
    };
    let mut session = Session::new(spec.spawn()?, bridge.controller(), assistant);
    let period = Duration::from_secs_f64(TICK_SECONDS);
    let start = Instant::now();
    let mut records = Vec::with_capacity(ticks as usize);
    let mut stale = Vec::with_capacity(ticks as usize);
    let mut published = 0;
    for k in 0..ticks {
        if let Some(w) = world_log.as_mut() {
            w.record(session.world())?;
        }
        let scene = if bridge.is_connected() {
            Frame::scene(session.world())
        } else {
            None
        };
        let record = session.step()?;
        let was_stale = session.controller().last_stale();
        if let Some(frame) = scene {
            let display = session.assistant().map(|a| a.display());
            bridge.publish(&frame.with_assist(display, record.smoothed, was_stale));
            published += 1;
        }
        records.push(record);
        stale.push(was_stale);
        if options.realtime {
            let deadline = start + period * (k as u32 + 1);
            if let Some(wait) = deadline.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
    }
    if let Some(dir) = out {
        prepare_dir(dir)?;
        if let Some(w) = world_log {
            w.finish()?;
        }
        write_run_outputs(dir, &manifest, &records, &stale)?;
    }
    Ok(ServeOutcome {
        records,
        stale,
        frames_published: published,
        malformed: bridge.malformed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn watchdog_holds_then_neutralizes() {
        let clock = ManualClock::default();
        let mut latch = ControlLatch::new(CONTROL_TIMEOUT);
        assert_eq!(latch.current(clock.now()), (ControlMessage::neutral(), true));
        let msg = ControlMessage {
            steering: 0.5,
            ..ControlMessage::neutral()
        };
        latch.update(msg, clock.now());
        clock.advance(Duration::from_millis(250));
        assert_eq!(latch.current(clock.now()), (msg, false));
        clock.advance(Duration::from_millis(1));
        assert_eq!(latch.current(clock.now()), (ControlMessage::neutral(), true));
    }

    #[test]
    fn controls_are_clamped_and_mapped() {
        let m = ControlMessage {
            steering: -3.0,
            throttle: 2.0,
            brake: -1.0,
            indicator: 1,
            timestamp: 0.0,
        };
        let input = m.to_input();
        assert_eq!(input.steering, ANGLE_LIMIT);
        assert_eq!(input.accel, FULL_THROTTLE);
        assert_eq!(input.indicator, Indicator::Left);
        let brake = ControlMessage {
            brake: 1.0,
            ..ControlMessage::neutral()
        };
        assert_eq!(brake.to_input().accel, -MAX_BRAKING);
    }

    #[test]
    fn malformed_messages_are_rejected() {
        assert!(parse_client_message("{").is_none());
        assert!(
            parse_client_message(r#"{"type":"control","steering":0,"throttle":0,"brake":0,"indicator":7}"#).is_none()
        );
        assert!(parse_client_message(r#"{"type":"steer"}"#).is_none());
        let ok = parse_client_message(r#"{"type":"control","steering":4,"throttle":0.5,"brake":0,"indicator":2}"#);
        match ok {
            Some(Message::Control(c)) => assert_eq!((c.steering, c.indicator), (1.0, 2)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_client_message(r#"{"type":"hello","protocol":1,"role":"client"}"#),
            Some(Message::Hello(_))
        ));
    }

    #[test]
    fn frame_queue_keeps_the_newest() {
        let q = ArrayQueue::new(FRAME_QUEUE_CAP);
        for i in 0..10 {
            q.force_push(i);
        }
        let kept: Vec<i32> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(kept, vec![6, 7, 8, 9]);
    }
}
