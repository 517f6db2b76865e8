// SPDX-License-Identifier: Apache-2.0

//! Live sessions: the tick agent on its own thread, HTTP servers on a tokio
//! runtime, steering delivered to the agent between ticks.

use std::fs::{self, File};
use std::io::LineWriter;
use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use edgescale_core::runtime::{
    LocalLocation, LocalOrchestrator, DE_ACTIONS_FILE, ORCHESTRATOR_EVENTS_FILE,
};
use edgescale_core::{
    ExperimentConfig, ExperimentError, OccupancySource, Orchestrator, RunReport, Runtime,
    ScaleTarget, ScheduledSteer, Shared,
};
use log::{info, warn};
use thiserror::Error;
use tokio::sync::{watch, Notify};

use crate::http::{orchestrator_app, sandbox_app, steer_channel, AppState, SteerReceiver};
use crate::remote::{RemoteLocation, RemoteOrchestrator};

/// How the agent paces ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// One tick per `tick_s` of wall time.
    Realtime,
    /// Ticks back to back.
    Fast,
    /// No ticks; steering is still applied.
    Paused,
}

#[derive(Debug, Clone)]
pub struct LiveOptions {
    pub pacing: Pacing,
    pub max_ticks: Option<u64>,
    pub location_addr: SocketAddr,
    pub orchestrator_addr: SocketAddr,
    pub dashboard_dir: Option<PathBuf>,
    pub location_url: Option<String>,
    pub orchestrator_url: Option<String>,
    /// Event logs stream here during the run; the remaining artifacts are
    /// written on shutdown.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("binding {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("tick agent panicked")]
    AgentPanicked,
}

pub struct LiveSession {
    pub location_addr: SocketAddr,
    pub orchestrator_addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    finished: Arc<Notify>,
    shutdown: watch::Sender<bool>,
    agent: JoinHandle<Runtime>,
    servers: Vec<tokio::task::JoinHandle<std::io::Result<()>>>,
    rt: tokio::runtime::Runtime,
    output_dir: Option<PathBuf>,
}

fn bind(addr: SocketAddr) -> Result<TcpListener, LiveError> {
    let l = TcpListener::bind(addr).map_err(|source| LiveError::Bind { addr, source })?;
    l.set_nonblocking(true)?;
    Ok(l)
}

fn line_file(path: PathBuf) -> std::io::Result<Box<dyn std::io::Write + Send>> {
    Ok(Box::new(LineWriter::new(File::create(path)?)))
}

impl LiveSession {
    pub fn start(config: &ExperimentConfig, opts: LiveOptions) -> Result<Self, LiveError> {
        config.validate()?;
        let loc_listener = bind(opts.location_addr)?;
        let orch_listener = bind(opts.orchestrator_addr)?;
        let location_addr = loc_listener.local_addr()?;
        let orchestrator_addr = orch_listener.local_addr()?;

        let mut orchestrator = Orchestrator::new();
        let mut action_sink = None;
        if let Some(dir) = &opts.output_dir {
            fs::create_dir_all(dir)?;
            orchestrator = orchestrator.with_event_sink(line_file(dir.join(ORCHESTRATOR_EVENTS_FILE))?);
            action_sink = Some(line_file(dir.join(DE_ACTIONS_FILE))?);
        }
        let mut runtime = Runtime::with_orchestrator(config, orchestrator)?;
        if let Some(sink) = action_sink {
            runtime.set_action_sink(sink);
        }
        let shared = runtime.shared();

        let (steer_tx, steer_rx) = steer_channel();
        let state = AppState {
            shared: Arc::clone(&shared),
            steer: steer_tx,
        };
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (shutdown, signal_rx) = watch::channel(false);
        let mut servers = Vec::new();
        {
            let _guard = rt.enter();
            for (listener, app) in [
                (loc_listener, sandbox_app(state.clone(), opts.dashboard_dir.clone())),
                (orch_listener, orchestrator_app(state)),
            ] {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                let mut signal = signal_rx.clone();
                servers.push(rt.spawn(async move {
                    axum::serve(listener, app)
                        .with_graceful_shutdown(async move {
                            let _ = signal.wait_for(|stop| *stop).await;
                        })
                        .await
                }));
            }
        }
        info!("location API and sandbox on http://{location_addr}");
        info!("orchestrator on http://{orchestrator_addr}");

        let stop = Arc::new(AtomicBool::new(false));
        let finished = Arc::new(Notify::new());
        let agent = Agent {
            runtime,
            steer_rx,
            steering: sorted(&config.steering),
            pacing: opts.pacing,
            max_ticks: opts.max_ticks,
            remote_location: opts.location_url.as_deref().map(RemoteLocation::new),
            remote_orchestrator: opts.orchestrator_url.as_deref().map(RemoteOrchestrator::new),
            stop: Arc::clone(&stop),
        };
        let done = Arc::clone(&finished);
        let agent = std::thread::Builder::new()
            .name("tick-agent".into())
            .spawn(move || agent.run(&done))?;

        Ok(Self {
            location_addr,
            orchestrator_addr,
            shared,
            stop,
            finished,
            shutdown,
            agent,
            servers,
            rt,
            output_dir: opts.output_dir,
        })
    }

    pub fn shared(&self) -> Arc<Shared> {
        Arc::clone(&self.shared)
    }

    /// Asks the agent to stop after its current tick.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Blocks until the agent reaches its tick limit or Ctrl-C arrives.
    pub fn wait_for_end(&self) {
        let finished = Arc::clone(&self.finished);
        self.rt.block_on(async move {
            tokio::select! {
                _ = finished.notified() => {}
                r = tokio::signal::ctrl_c() => {
                    if let Err(e) = r {
                        warn!("cannot listen for Ctrl-C: {e}");
                        std::future::pending::<()>().await;
                    }
                    info!("interrupted, shutting down");
                }
            }
        });
    }

    /// Stops everything and writes artifacts when an output directory is set.
    pub fn shutdown(self) -> Result<RunReport, LiveError> {
        self.stop();
        let runtime = self.agent.join().map_err(|_| LiveError::AgentPanicked)?;
        let _ = self.shutdown.send(true);
        for server in self.servers {
            match self.rt.block_on(server) {
                Ok(Err(e)) => warn!("server error: {e}"),
                Err(e) => warn!("server task failed: {e}"),
                Ok(Ok(())) => {}
            }
        }
        self.rt.shutdown_timeout(Duration::from_secs(1));
        let report = runtime.finish();
        if let Some(dir) = &self.output_dir {
            report.write_artifacts(dir)?;
        }
        Ok(report)
    }
}

fn sorted(steering: &[ScheduledSteer]) -> Vec<ScheduledSteer> {
    let mut v = steering.to_vec();
    v.sort_by_key(|s| std::cmp::Reverse(s.tick));
    v
}

struct Agent {
    runtime: Runtime,
    steer_rx: SteerReceiver,
    /// Latest tick last, so due entries pop off the end.
    steering: Vec<ScheduledSteer>,
    pacing: Pacing,
    max_ticks: Option<u64>,
    remote_location: Option<RemoteLocation>,
    remote_orchestrator: Option<RemoteOrchestrator>,
    stop: Arc<AtomicBool>,
}

impl Agent {
    fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    fn drain_steering(&mut self) {
        while let Ok((command, reply)) = self.steer_rx.try_recv() {
            let result = self.runtime.apply_steer(&command);
            if let Err(e) = &result {
                info!("steer rejected: {e}");
            }
            let _ = reply.send(result);
        }
    }

    fn idle_until(&mut self, deadline: Instant) {
        loop {
            self.drain_steering();
            let now = Instant::now();
            if now >= deadline || self.stopped() {
                return;
            }
            std::thread::sleep((deadline - now).min(Duration::from_millis(5)));
        }
    }

    fn poll(&mut self) {
        let shared = self.runtime.shared();
        let mut local_source = LocalLocation(&shared.location);
        let mut local_target = LocalOrchestrator(&shared.orchestrator);
        let source: &mut dyn OccupancySource = match self.remote_location.as_mut() {
            Some(r) => r,
            None => &mut local_source,
        };
        let target: &mut dyn ScaleTarget = match self.remote_orchestrator.as_mut() {
            Some(r) => r,
            None => &mut local_target,
        };
        self.runtime.poll_with(source, target);
    }

    /// Ticks until stopped or out of ticks, then keeps serving steering
    /// until stopped.
    fn run(mut self, done: &Notify) -> Runtime {
        let mut next = Instant::now();
        loop {
            self.drain_steering();
            if self.stopped() {
                break;
            }
            let ticks = self.runtime.simulator().clock().tick_index;
            if self.max_ticks.is_some_and(|m| ticks >= m) {
                break;
            }
            if self.pacing == Pacing::Paused {
                self.idle_until(Instant::now() + Duration::from_millis(5));
                continue;
            }
            while self.steering.last().is_some_and(|s| s.tick <= ticks) {
                let s = self.steering.pop().expect("checked");
                if let Err(e) = self.runtime.apply_steer(&s.command) {
                    warn!("scheduled steer at tick {} rejected: {e}", s.tick);
                }
            }
            if self.runtime.advance() {
                self.poll();
            }
            if self.pacing == Pacing::Realtime {
                let tick = self.runtime.simulator().scenario().tick_s;
                next += Duration::from_secs_f64(tick);
                self.idle_until(next);
            }
        }
        done.notify_one();
        while !self.stopped() {
            self.idle_until(Instant::now() + Duration::from_millis(20));
        }
        self.runtime
    }
}
