//! Start the HTTP API on an ephemeral port, create a mission over plain HTTP
//! and print the responses.
//!
//! cargo run -p fits-service --example http_server

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::time::Duration;

use fits_core::compiler::CompileOptions;
use fits_core::library::Library;
use fits_core::package::MissionPackage;
use fits_service::{serve, Service, Store};

fn http(addr: std::net::SocketAddr, method: &str, path: &str, body: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    response
}

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/takeoff.fits");
    let graph = Library::load(&[path]).unwrap().compile("TC02", &CompileOptions::default()).unwrap().unwrap().graph;
    let package = MissionPackage::from_graph(&graph).to_json();

    let dir = tempfile::tempdir().unwrap();
    let service = Arc::new(Service::recover(Store::open(dir.path()).unwrap(), Arc::new(fits_core::engine::WallClock), 2.0).unwrap());

    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(serve(listener, service, Duration::from_secs(1)));
    println!("listening on http://{addr}");

    let created = http(addr, "POST", "/missions", &format!(r#"{{"package":{package},"mission_id":"demo"}}"#));
    println!("{}", created.lines().next().unwrap());

    let confirm = r#"{"kind":"confirm_condition","actor":"mission_commander","condition":"test site is reserved"}"#;
    let response = http(addr, "POST", "/missions/demo/commands", confirm);
    println!("{}", response.lines().next().unwrap());

    let tasks = http(addr, "GET", "/missions/demo/tasks?role=mission_commander", "");
    println!("{}", tasks.split("\r\n\r\n").nth(1).unwrap_or_default());
}
