//! Gateway connections speaking the length-prefixed frame protocol.

use anyhow::Result;
use sinet_core::edge::frame::{self, Frame};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::broadcast::error::RecvError;
use tracing::{debug, info, warn};

use crate::service::AppState;

pub async fn accept(listener: TcpListener, state: AppState) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                info!(%peer, "gateway connected");
                let state = state.clone();
                tokio::spawn(async move {
                    if let Err(e) = connection(stream, state).await {
                        warn!(%peer, "gateway connection closed: {e:#}");
                    } else {
                        info!(%peer, "gateway disconnected");
                    }
                });
            }
            Err(e) => warn!("accepting gateway connection failed: {e}"),
        }
    }
}

/// Samples flow in; every command the edge issues flows out to every
/// connected gateway, which forwards those addressed to its actuators.
async fn connection(stream: TcpStream, state: AppState) -> Result<()> {
    let (mut reader, mut writer) = stream.into_split();
    let mut commands = state
        .subscribe_commands()
        .ok_or_else(|| anyhow::anyhow!("service is simulating devices"))?;
    let outbound = tokio::spawn(async move {
        loop {
            match commands.recv().await {
                Ok(cmd) => {
                    if writer.write_all(&frame::encode(&Frame::Command(cmd))).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(n)) => warn!(missed = n, "gateway fell behind on commands"),
                Err(RecvError::Closed) => return,
            }
        }
    });

    let mut buf = Vec::with_capacity(256);
    let mut chunk = [0u8; 1024];
    let res = loop {
        let n = reader.read(&mut chunk).await?;
        if n == 0 {
            break Ok(());
        }
        buf.extend_from_slice(&chunk[..n]);
        let mut used = 0;
        let decoded = loop {
            match frame::decode(&buf[used..]) {
                Ok(Some((Frame::Sample(sample), len))) => {
                    used += len;
                    if let Err(e) = state.ingest_device(sample) {
                        warn!("ingest failed: {e}");
                    }
                }
                Ok(Some((Frame::Command(cmd), len))) => {
                    used += len;
                    debug!(?cmd, "ignoring command frame sent by a gateway");
                }
                Ok(None) => break Ok(()),
                Err(e) => break Err(e),
            }
        };
        buf.drain(..used);
        if let Err(e) = decoded {
            break Err(e.into());
        }
    };
    outbound.abort();
    res
}
