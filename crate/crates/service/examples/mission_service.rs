//! Use the service layer in-process: create a mission from a package, send
//! commands, restart from the store and check nothing was lost.
//!
//! cargo run -p fits-service --example mission_service

use std::sync::Arc;

use fits_core::compiler::CompileOptions;
use fits_core::library::Library;
use fits_core::package::MissionPackage;
use fits_service::app::{CommandKind, CommandRequest, CreateMission};
use fits_service::{ManualClock, Service, Store};

fn command(kind: CommandKind, actor: &str) -> CommandRequest {
    CommandRequest { kind, actor: actor.into(), task_id: None, condition: None, value: None, note: None, priority: None }
}

#[tokio::main]
async fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/tc01.fits");
    let graph = Library::load(&[path]).unwrap().compile("TC01", &CompileOptions::default()).unwrap().unwrap().graph;
    let package = serde_json::from_str(&MissionPackage::from_graph(&graph).to_json()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0));
    let service = Service::recover(Store::open(dir.path()).unwrap(), clock.clone(), 2.0).unwrap();

    let bindings = (1..=3).map(|i| (format!("sUAS_{i}"), format!("pilot_{i}"))).collect();
    let entry = service.create(CreateMission { package, bindings, mission_id: None }).unwrap();
    let id = entry.mission_id;
    println!("created {id}");

    clock.advance(5_000);
    let mut confirm = command(CommandKind::ConfirmCondition, "pilot_1");
    confirm.condition = Some("sUAS1 is available at test site.".into());
    service.command(&id, confirm).await.unwrap();

    let mut start = command(CommandKind::StartTask, "pilot_1");
    start.task_id = Some("11.1".into());
    let out = service.command(&id, start.clone()).await.unwrap();
    println!("start 11.1 -> seq {}", out.seq);

    // Starting twice is a conflict.
    let err = service.command(&id, start).await.unwrap_err();
    println!("start 11.1 again -> {} {}", err.kind.status(), err.code);

    let before = service.summary(&id).await.unwrap();
    drop(service);
    let service = Service::recover(Store::open(dir.path()).unwrap(), clock, 2.0).unwrap();
    let after = service.summary(&id).await.unwrap();
    println!("digest before restart {}", before.digest);
    println!("digest after restart  {}", after.digest);
    assert_eq!(before.digest, after.digest);
}
