#![allow(dead_code)]

pub mod gen;
pub mod golden;
pub mod oracle;

use std::sync::Arc;

use smartdoor_core::http::ServerHandle;
use smartdoor_core::protocol::server::router;
use smartdoor_core::protocol::service::{FaceService, ServiceSettings};
use smartdoor_core::{ManualClock, Store};

pub const API_KEY: &str = "face-key";

pub struct Served {
    pub clock: ManualClock,
    pub service: Arc<FaceService>,
    pub server: ServerHandle,
}

pub fn serve_faces() -> Served {
    serve_faces_with(ServiceSettings::default())
}

pub fn serve_faces_with(settings: ServiceSettings) -> Served {
    let clock = ManualClock::new(0);
    let service = Arc::new(FaceService::new(
        Store::new(),
        Arc::new(clock.clone()),
        settings,
    ));
    let server = ServerHandle::spawn(router(service.clone(), API_KEY), "127.0.0.1:0").unwrap();
    Served {
        clock,
        service,
        server,
    }
}

pub fn http() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(5))
        .build()
        .unwrap()
}

/// A port with nobody listening on it.
pub fn dead_url() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}")
}
